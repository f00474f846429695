use crate::corpus::{padded_len, patch_offsets, LabelRaster, LabelSource, Tile};
use crate::error::{Error, Result};
use crate::nn;
use crate::raster::{Raster, Rgb};
use crate::segnet::SegModel;

use super::{Translator, TranslationModelPair};

/// Applies `gen` to non-overlapping `patch_px` windows of a mirror-padded
/// copy of `image` and stitches the result.
pub fn translate_image(gen: &impl Translator, image: &Raster<Rgb>, patch_px: usize) -> Result<Raster<Rgb>> {
    if patch_px == 0 {
        return Err(Error::Config("patch size must be at least 1 pixel".into()));
    }
    let (h, w) = image.shape();
    let padded = image.pad_reflect(padded_len(h, patch_px), padded_len(w, patch_px));
    let mut out = Raster::filled(h, w, [0u8; 3]);
    for (r, c) in patch_offsets(h, w, patch_px) {
        let crop = padded.crop(r, c, patch_px, patch_px);
        let x = nn::images_to_tensor(&[&crop], gen.dtype())?;
        out.paste(&nn::tensor_to_image(&gen.translate(&x)?, 0)?, r, c);
    }
    Ok(out)
}

/// Historical tile → modern style → labels. Translation runs on the
/// translator's own training crop for the tile's collection, segmentation
/// on `seg_patch_px`.
pub fn translate_then_segment(
    pair: &TranslationModelPair,
    seg_model: &SegModel,
    tile: &Tile,
    seg_patch_px: usize,
) -> Result<LabelRaster> {
    let modern = translate_image(&pair.gen_xy, &tile.image, pair.config.crop_for(tile.collection)?)?;
    Ok(LabelRaster::new(
        tile.tile_id.clone(),
        LabelSource::HistoricalManual,
        seg_model.predict_image(&modern, seg_patch_px)?,
    ))
}

/// Rows of `(input, translated)` images side by side on a white canvas
/// with a 4 px gutter.
pub fn preview_grid(rows: &[(Raster<Rgb>, Raster<Rgb>)]) -> Result<Raster<Rgb>> {
    const GAP: usize = 4;
    if rows.is_empty() {
        return Err(Error::Data("nothing to preview".into()));
    }
    let cell_h = rows.iter().map(|(a, b)| a.height().max(b.height())).max().unwrap_or(0);
    let cell_w = rows.iter().map(|(a, b)| a.width().max(b.width())).max().unwrap_or(0);
    let h = rows.len() * cell_h + (rows.len() + 1) * GAP;
    let w = 2 * cell_w + 3 * GAP;
    let mut canvas = Raster::filled(h, w, [255u8; 3]);
    for (i, (a, b)) in rows.iter().enumerate() {
        let top = GAP + i * (cell_h + GAP);
        canvas.paste(a, top, GAP);
        canvas.paste(b, top, 2 * GAP + cell_w);
    }
    Ok(canvas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Collection, Georef};
    use crate::segnet::{build_model, SegConfig};
    use crate::translator::Identity;

    fn img(h: usize, w: usize) -> Raster<Rgb> {
        Raster::from_fn(h, w, |r, c| [(r * 9 % 256) as u8, (c * 17 % 256) as u8, ((r * c) % 256) as u8])
    }

    #[test]
    fn identity_translation_reproduces_the_image() {
        let image = img(13, 10);
        assert_eq!(translate_image(&Identity, &image, 4).unwrap(), image);
    }

    #[test]
    fn identity_generator_reduces_to_direct_segmentation() {
        let cfg = SegConfig {
            stages: 2,
            base_channels: 2,
            max_channels: 4,
            ..SegConfig::toy()
        };
        let seg = build_model(&cfg, 1).unwrap();
        let tile = Tile::new("a", Collection::Cassini, img(16, 16), Georef::north_up(0.0, 0.0, 1.0)).unwrap();
        let modern = translate_image(&Identity, &tile.image, 8).unwrap();
        let direct = seg.predict_image(&tile.image, 8).unwrap();
        assert_eq!(seg.predict_image(&modern, 8).unwrap(), direct);
    }

    #[test]
    fn chain_output_matches_input_shape() {
        let tcfg = crate::translator::TransConfig {
            gen_channels: 2,
            gen_blocks: 1,
            disc_channels: 2,
            ..crate::translator::TransConfig::toy()
        };
        let pair = TranslationModelPair::new(&tcfg, 0, candle_core::DType::F32).unwrap();
        let cfg = SegConfig {
            stages: 2,
            base_channels: 2,
            max_channels: 4,
            ..SegConfig::toy()
        };
        let seg = build_model(&cfg, 1).unwrap();
        let tile = Tile::new("b", Collection::Cassini, img(21, 18), Georef::north_up(0.0, 0.0, 1.0)).unwrap();
        let out = translate_then_segment(&pair, &seg, &tile, 8).unwrap();
        assert_eq!(out.shape(), (21, 18));
        assert_eq!(out.tile_id, "b");
    }

    #[test]
    fn preview_places_pairs_side_by_side() {
        let (a, b) = (img(5, 6), Raster::filled(5, 6, [1u8, 2, 3]));
        let g = preview_grid(&[(a.clone(), b.clone()), (b.clone(), a.clone())]).unwrap();
        assert_eq!(g.shape(), (2 * 5 + 3 * 4, 2 * 6 + 3 * 4));
        assert_eq!(g.crop(4, 4, 5, 6), a);
        assert_eq!(g.crop(4, 14, 5, 6), b);
        assert_eq!(g.crop(13, 14, 5, 6), a);
        assert!(preview_grid(&[]).is_err());
    }
}
