//! Datasets, views, loaders, splits and augmentation.

mod dataset;
mod idx;
mod image_dir;
mod split;

pub use dataset::{LabeledDataset, SubsetView};
pub use idx::{
    dataset_from_idx, decode_idx_images, decode_idx_labels, encode_idx_dataset, encode_idx_images, encode_idx_labels,
    load_idx, IMAGES_MAGIC, LABELS_MAGIC,
};
pub use image_dir::{decode_png, load_image_dir, resize_bilinear, write_png, Image};
pub use split::{augment, split, AugmentOps};
