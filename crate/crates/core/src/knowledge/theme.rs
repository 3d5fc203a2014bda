use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::SubjectArea;

/// A `#RRGGBB` color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HexColor([u8; 3]);

impl HexColor {
    pub const fn rgb(r: u8, g: u8, b: u8) -> Self {
        Self([r, g, b])
    }

    pub fn channels(self) -> [u8; 3] {
        self.0
    }

    /// Mixes toward white by `amount` in [0, 1].
    pub fn lighten(self, amount: f64) -> Self {
        let amount = amount.clamp(0.0, 1.0);
        let mix = |c: u8| (c as f64 + (255.0 - c as f64) * amount).round() as u8;
        Self(self.0.map(mix))
    }
}

impl fmt::Display for HexColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [r, g, b] = self.0;
        write!(f, "#{r:02X}{g:02X}{b:02X}")
    }
}

impl FromStr for HexColor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .strip_prefix('#')
            .ok_or_else(|| format!("{s:?} lacks a leading #"))?;
        if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(format!("{s:?} is not a 6-digit hex color"));
        }
        let byte = |i: usize| u8::from_str_radix(&digits[i..i + 2], 16).unwrap();
        Ok(Self([byte(0), byte(2), byte(4)]))
    }
}

impl Serialize for HexColor {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HexColor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theme {
    pub subject_area: SubjectArea,
    pub primary_color: HexColor,
    pub accent_color: HexColor,
}

const ACCENT_LIGHTEN: f64 = 0.4;

impl Theme {
    /// JSON rendering used as the stage-two theme description.
    pub fn config_text(&self) -> String {
        serde_json::to_string(self).expect("theme serializes")
    }
}

pub fn select_theme(subject: SubjectArea) -> Theme {
    let primary = match subject {
        SubjectArea::Physics => HexColor::rgb(0x1E, 0x5A, 0xA8),
        SubjectArea::Biology => HexColor::rgb(0x2E, 0x7D, 0x32),
        SubjectArea::Chemistry => HexColor::rgb(0xE6, 0x51, 0x00),
        SubjectArea::Math => HexColor::rgb(0x6A, 0x1B, 0x9A),
        SubjectArea::Geography => HexColor::rgb(0x00, 0x69, 0x5C),
        SubjectArea::Other => HexColor::rgb(0x45, 0x5A, 0x64),
    };
    Theme {
        subject_area: subject,
        primary_color: primary,
        accent_color: primary.lighten(ACCENT_LIGHTEN),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_families() {
        let [r, g, b] = select_theme(SubjectArea::Physics).primary_color.channels();
        assert!(b > r && b > g, "physics is blue");
        let [r, g, b] = select_theme(SubjectArea::Biology).primary_color.channels();
        assert!(g > r && g > b, "biology is green");
        let [r, g, b] = select_theme(SubjectArea::Chemistry)
            .primary_color
            .channels();
        assert!(r > g && g > b, "chemistry is orange");
        let [r, g, b] = select_theme(SubjectArea::Other).primary_color.channels();
        assert!(
            r.abs_diff(g) < 0x20 && g.abs_diff(b) < 0x20,
            "other is grayish"
        );
    }

    #[test]
    fn primaries_are_distinct() {
        let mut seen: Vec<HexColor> = SubjectArea::ALL
            .iter()
            .map(|s| select_theme(*s).primary_color)
            .collect();
        seen.sort_by_key(|c| c.channels());
        seen.dedup();
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn hex_parsing() {
        assert_eq!(
            "#1e5aa8".parse::<HexColor>().unwrap().to_string(),
            "#1E5AA8"
        );
        assert!("1E5AA8".parse::<HexColor>().is_err());
        assert!("#1E5AA".parse::<HexColor>().is_err());
        assert!("#GGGGGG".parse::<HexColor>().is_err());
    }

    #[test]
    fn accent_is_lighter() {
        let t = select_theme(SubjectArea::Physics);
        // 0x1E + (0xFF - 0x1E) * 0.4 = 120
        assert_eq!(t.accent_color.channels()[0], 120);
        assert_eq!(t.accent_color.to_string(), "#789CCB");
    }
}
