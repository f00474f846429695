use super::{ClassId, LabelRaster, Tile};
use crate::error::{Error, Result};
use crate::raster::{Raster, Rgb};

/// One non-overlapping window of a (padded) tile. `row`/`col` locate its
/// top-left corner in the original tile frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub image: Raster<Rgb>,
    pub labels: Option<Raster<ClassId>>,
    pub row: usize,
    pub col: usize,
}

/// Smallest multiple of `patch` that is at least `n`.
pub fn padded_len(n: usize, patch: usize) -> usize {
    n.div_ceil(patch) * patch
}

/// Top-left offsets of the patch grid, row-major.
pub fn patch_offsets(height: usize, width: usize, patch: usize) -> Vec<(usize, usize)> {
    let (ph, pw) = (padded_len(height, patch), padded_len(width, patch));
    (0..ph)
        .step_by(patch)
        .flat_map(|r| (0..pw).step_by(patch).map(move |c| (r, c)))
        .collect()
}

/// Cuts a tile into `patch_px × patch_px` windows without overlap. Images are
/// mirror-padded up to the next multiple of `patch_px`; labels are padded
/// with background.
pub fn extract_patches(
    tile: &Tile,
    labels: Option<&LabelRaster>,
    patch_px: usize,
) -> Result<Vec<Patch>> {
    if patch_px == 0 {
        return Err(Error::Config("patch size must be at least 1 pixel".into()));
    }
    if let Some(l) = labels {
        l.data.ensure_shape(tile.shape())?;
    }
    let (h, w) = tile.shape();
    let (ph, pw) = (padded_len(h, patch_px), padded_len(w, patch_px));
    let image = tile.image.pad_reflect(ph, pw);
    let labels = labels.map(|l| l.data.pad_constant(ph, pw, ClassId::Background));
    Ok(patch_offsets(h, w, patch_px)
        .into_iter()
        .map(|(row, col)| Patch {
            image: image.crop(row, col, patch_px, patch_px),
            labels: labels
                .as_ref()
                .map(|l| l.crop(row, col, patch_px, patch_px)),
            row,
            col,
        })
        .collect())
}

/// Reassembles patches at their offsets and crops to `height × width`.
pub fn stitch<T: Clone + Default>(
    patches: impl IntoIterator<Item = (Raster<T>, usize, usize)>,
    height: usize,
    width: usize,
) -> Raster<T> {
    let mut out = Raster::filled(height, width, T::default());
    for (p, row, col) in patches {
        out.paste(&p, row, col);
    }
    out
}
