use std::fmt;
use std::str::FromStr;

/// The four Kiñits. Class indices follow declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KinitLabel {
    Tizita,
    Bati,
    Ambassel,
    Anchihoye,
}

pub const N_CLASSES: usize = 4;

impl KinitLabel {
    pub const ALL: [KinitLabel; N_CLASSES] = [
        KinitLabel::Tizita,
        KinitLabel::Bati,
        KinitLabel::Ambassel,
        KinitLabel::Anchihoye,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            KinitLabel::Tizita => "Tizita",
            KinitLabel::Bati => "Bati",
            KinitLabel::Ambassel => "Ambassel",
            KinitLabel::Anchihoye => "Anchihoye",
        }
    }
}

impl fmt::Display for KinitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KinitLabel {
    type Err = String;

    /// Case-insensitive.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name().to_ascii_lowercase() == lower)
            .ok_or_else(|| format!("unknown Kiñit '{s}'"))
    }
}
