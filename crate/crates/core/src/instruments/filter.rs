use serde::{Deserialize, Serialize};

/// Coupled image style / text tone presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Warm,
    Calm,
    Dramatic,
    Dreamy,
    Monochrome,
}

impl FilterKind {
    pub const ALL: [FilterKind; 5] =
        [FilterKind::Warm, FilterKind::Calm, FilterKind::Dramatic, FilterKind::Dreamy, FilterKind::Monochrome];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterKind::Warm => "warm",
            FilterKind::Calm => "calm",
            FilterKind::Dramatic => "dramatic",
            FilterKind::Dreamy => "dreamy",
            FilterKind::Monochrome => "monochrome",
        }
    }

    pub fn image_style_directive(self) -> &'static str {
        match self {
            FilterKind::Warm => {
                "Warm tones (gold, amber, red, orange, yellow), high exposure, strong contrast → evoke happiness, comfort, nostalgia"
            }
            FilterKind::Calm => {
                "Cool tones (blue, green, purple) with balanced or lower saturation → convey calmness, wisdom, introspection"
            }
            FilterKind::Dramatic => {
                "Deep blacks, sharp whites, directional lighting → create intensity, mystery, urgency"
            }
            FilterKind::Dreamy => {
                "Soft tones, lowered contrast, diffuse focus → suggest melancholy, intimacy, ethereality"
            }
            FilterKind::Monochrome => {
                "Removal of color, emphasis on light, shadow, texture → evoke nostalgia, timelessness, artistry"
            }
        }
    }

    pub fn text_tone_directive(self) -> &'static str {
        match self {
            FilterKind::Warm => "Emphasizes positivity, vitality, intimacy",
            FilterKind::Calm => "Reflects contemplative and stable moods",
            FilterKind::Dramatic => "Heightens stakes and emotional tension",
            FilterKind::Dreamy => "Supports subtle, nostalgic, introspective narration",
            FilterKind::Monochrome => "Adopts reflective and universal tone",
        }
    }
}

impl std::str::FromStr for FilterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown filter `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_kinds_with_non_empty_directives() {
        assert_eq!(FilterKind::ALL.len(), 5);
        for kind in FilterKind::ALL {
            assert!(!kind.image_style_directive().is_empty());
            assert!(!kind.text_tone_directive().is_empty());
            assert_eq!(kind.as_str().parse::<FilterKind>().unwrap(), kind);
        }
    }

    #[test]
    fn warm_row() {
        assert!(FilterKind::Warm.image_style_directive().contains("gold, amber, red, orange, yellow"));
        assert!(FilterKind::Warm.text_tone_directive().contains("positivity, vitality, intimacy"));
    }
}
