"""Shared fixtures."""

import pytest


def _write(path, *lines):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@pytest.fixture
def reflacx_tree(tmp_path):
    """A miniature copy of the public eye-tracking dataset layout.

    Studies: s1 (complete), s2 (alternate fixation column names, no
    transcription file), s3 (flagged discarded), s4 (metadata only, no
    study directory).
    """
    root = tmp_path / "reflacx"
    _write(
        root / "metadata_phase_3.csv",
        "id,eye_tracking_data_discarded,image,image_size_x,image_size_y",
        "s1,False,images/s1.dcm,300,200",
        "s2,False,,320,240",
        "s3,True,,100,100",
        "s4,False,,150,150",
    )
    _write(
        root / "main_data" / "s1" / "fixations.csv",
        "timestamp_start_fixation,timestamp_end_fixation,x_position,y_position",
        "0.5,1.0,50,60",
        "1.2,1.8,55,66",
        "2.5,3.0,400,80",
    )
    _write(
        root / "main_data" / "s1" / "timestamps_transcription.csv",
        "word,timestamp_start_word,timestamp_end_word",
        "The,0.2,0.4",
        "heart,0.5,0.8",
        "is,0.9,1.0",
        "big.,1.1,1.5",
        "Lungs,2.0,2.3",
        "clear,2.4,2.9",
    )
    _write(
        root / "main_data" / "s1" / "anomaly_location_ellipses.csv",
        "xmin,ymin,xmax,ymax,certainty,Cardiomegaly,Nodule",
        "10,20,110,80,4,True,False",
        "30,40,70,60,3,False,False",
    )
    _write(
        root / "main_data" / "s2" / "fixations.csv",
        "timestamp_start_fixation,timestamp_end_fixation,"
        "average_x_position,average_y_position",
        "0.0,0.4,100,100",
    )
    _write(
        root / "main_data" / "s2" / "anomaly_location_ellipses.csv",
        "xmin,ymin,xmax,ymax,certainty,Cardiomegaly,Nodule",
        "50,50,150,150,5,True,True",
    )
    return root
