from .cascade import (
    CascadeGeometry, SkipSlice, cascade_apply, cascade_invert, cascade_preprocess, make_tumor_samples,
)
from .slicing import SliceSample, filter_liver_slices, foreground_mask, make_samples, slice_volume
from .transforms import augment_liver, augment_tumor, resize
from .volume import CtVolume, hu_window, load_nifti, minmax_normalize, preprocess_hu, save_nifti

__all__ = [
    "CascadeGeometry", "CtVolume", "SkipSlice", "SliceSample", "augment_liver", "augment_tumor",
    "cascade_apply", "cascade_invert", "cascade_preprocess", "filter_liver_slices",
    "foreground_mask", "hu_window", "load_nifti", "make_samples", "make_tumor_samples", "minmax_normalize",
    "preprocess_hu", "resize", "save_nifti", "slice_volume",
]
