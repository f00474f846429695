use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{ClassId, LabelRaster, LabelSource};
use crate::error::{Error, Result};
use crate::raster::{Raster, Rgb};

/// Class → colour mapping. Serialized as a table of `"#RRGGBB"` strings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Palette(pub BTreeMap<ClassId, Rgb>);

pub fn parse_hex(s: &str) -> Option<Rgb> {
    let s = s.strip_prefix('#')?;
    if s.len() != 6 {
        return None;
    }
    let v = u32::from_str_radix(s, 16).ok()?;
    Some([(v >> 16) as u8, (v >> 8) as u8, v as u8])
}

pub fn to_hex(c: Rgb) -> String {
    format!("#{:02X}{:02X}{:02X}", c[0], c[1], c[2])
}

impl Palette {
    /// The legend colours used for label visualisation.
    pub fn legend() -> Self {
        Palette(
            [
                (ClassId::Background, [0xFF, 0xFF, 0xFF]),
                (ClassId::Forest, [0x99, 0xEC, 0x53]),
                (ClassId::Hydrography, [0x31, 0xC1, 0xEC]),
                (ClassId::Roads, [0xE9, 0x89, 0x4A]),
                (ClassId::Buildings, [0xEA, 0x00, 0x29]),
            ]
            .into(),
        )
    }

    pub fn get(&self, c: ClassId) -> Option<Rgb> {
        self.0.get(&c).copied()
    }

    /// Complete over the five classes and injective.
    pub fn validate(&self) -> Result<()> {
        for c in ClassId::ALL {
            if !self.0.contains_key(&c) {
                return Err(Error::IncompletePalette(c.name()));
            }
        }
        let mut seen = HashMap::new();
        for (c, rgb) in &self.0 {
            if let Some(prev) = seen.insert(*rgb, *c) {
                return Err(Error::Config(format!(
                    "palette maps both {prev} and {c} to {}",
                    to_hex(*rgb)
                )));
            }
        }
        Ok(())
    }
}

impl Serialize for Palette {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let m: BTreeMap<&str, String> = self.0.iter().map(|(c, v)| (c.name(), to_hex(*v))).collect();
        m.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Palette {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = BTreeMap::<String, String>::deserialize(d)?;
        let mut out = BTreeMap::new();
        for (k, v) in raw {
            let c = ClassId::from_name(&k)
                .ok_or_else(|| D::Error::custom(format!("unknown class `{k}`")))?;
            let rgb =
                parse_hex(&v).ok_or_else(|| D::Error::custom(format!("bad colour `{v}`")))?;
            out.insert(c, rgb);
        }
        Ok(Palette(out))
    }
}

/// Pixelwise palette lookup.
pub fn colorize(labels: &LabelRaster, palette: &Palette) -> Result<Raster<Rgb>> {
    let mut lut = [None; 5];
    for c in ClassId::ALL {
        lut[c.index()] = palette.get(c);
    }
    let mut data = Vec::with_capacity(labels.data.data().len());
    for &c in labels.data.data() {
        data.push(lut[c.index()].ok_or(Error::IncompletePalette(c.name()))?);
    }
    Raster::from_vec(labels.data.height(), labels.data.width(), data)
}

/// Inverse lookup; every pixel must carry a palette colour.
pub fn declassify(
    tile_id: &str,
    image: &Raster<Rgb>,
    palette: &Palette,
) -> Result<LabelRaster> {
    let inverse: HashMap<Rgb, ClassId> = palette.0.iter().map(|(c, v)| (*v, *c)).collect();
    let mut data = Vec::with_capacity(image.data().len());
    for px in image.data() {
        data.push(*inverse.get(px).ok_or(Error::UnknownColor(*px))?);
    }
    Ok(LabelRaster::new(
        tile_id,
        LabelSource::ModernVector,
        Raster::from_vec(image.height(), image.width(), data)?,
    ))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use proptest::prelude::*;

    use super::*;

    fn labels(h: usize, w: usize, v: Vec<ClassId>) -> LabelRaster {
        LabelRaster::new("t", LabelSource::ModernVector, Raster::from_vec(h, w, v).unwrap())
    }

    #[test]
    fn background_only_is_uniform() {
        let img = colorize(&labels(3, 3, vec![ClassId::Background; 9]), &Palette::legend()).unwrap();
        assert!(img.data().iter().all(|&p| p == [255, 255, 255]));
    }

    #[test]
    fn five_classes_give_five_colours() {
        let l = labels(1, 5, ClassId::ALL.to_vec());
        let img = colorize(&l, &Palette::legend()).unwrap();
        assert_eq!(img.data().iter().collect::<HashSet<_>>().len(), 5);
        assert_eq!(declassify("t", &img, &Palette::legend()).unwrap(), l);
    }

    #[test]
    fn missing_colour_is_an_error() {
        let mut p = Palette::legend();
        p.0.remove(&ClassId::Roads);
        assert!(matches!(p.validate(), Err(Error::IncompletePalette("roads"))));
        let err = colorize(&labels(1, 2, vec![ClassId::Forest, ClassId::Roads]), &p).unwrap_err();
        assert!(matches!(err, Error::IncompletePalette("roads")));
        assert!(matches!(
            declassify("t", &Raster::filled(1, 1, [1, 2, 3]), &Palette::legend()),
            Err(Error::UnknownColor([1, 2, 3]))
        ));
    }

    #[test]
    fn non_injective_palette_is_rejected() {
        let mut p = Palette::legend();
        p.0.insert(ClassId::Roads, [0x99, 0xEC, 0x53]);
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn declassify_inverts_colorize(h in 1usize..20, w in 1usize..20, seed in prop::collection::vec(0u8..5, 400)) {
            let v: Vec<ClassId> = (0..h * w).map(|i| ClassId::from_u8(seed[i % seed.len()]).unwrap()).collect();
            let l = labels(h, w, v);
            let img = colorize(&l, &Palette::legend()).unwrap();
            prop_assert_eq!(declassify("t", &img, &Palette::legend()).unwrap(), l);
        }
    }
}
