//! Class labels and the fixed display palette.

use std::fmt;

/// Number of trainable classes.
pub const NUM_CLASSES: usize = 6;

/// Index of the post-network "unknown" label.
pub const UNKNOWN: u8 = 6;

/// Number of labels including unknown.
pub const NUM_LABELS: usize = 7;

/// A pixel class. Discriminants follow the order of the network's output
/// tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum ClassLabel {
    Building = 0,
    Tree = 1,
    Road = 2,
    ArtificialGround = 3,
    NaturalGround = 4,
    Car = 5,
    Unknown = 6,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; NUM_LABELS] = [
        ClassLabel::Building,
        ClassLabel::Tree,
        ClassLabel::Road,
        ClassLabel::ArtificialGround,
        ClassLabel::NaturalGround,
        ClassLabel::Car,
        ClassLabel::Unknown,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(index: u8) -> Option<Self> {
        Self::ALL.get(index as usize).copied()
    }

    pub fn color(self) -> [u8; 3] {
        match self {
            ClassLabel::Building => [0, 0, 255],
            ClassLabel::Tree => [0, 255, 0],
            ClassLabel::Road => [255, 255, 255],
            ClassLabel::ArtificialGround => [255, 0, 0],
            ClassLabel::NaturalGround => [0, 255, 255],
            ClassLabel::Car => [255, 255, 0],
            ClassLabel::Unknown => [0, 0, 0],
        }
    }

    pub fn from_color(rgb: [u8; 3]) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.color() == rgb)
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Building => "building",
            ClassLabel::Tree => "tree",
            ClassLabel::Road => "road",
            ClassLabel::ArtificialGround => "artificial_ground",
            ClassLabel::NaturalGround => "natural_ground",
            ClassLabel::Car => "car",
            ClassLabel::Unknown => "unknown",
        }
    }

    /// True for the classes meshed as terrain during reconstruction.
    pub fn is_ground(self) -> bool {
        matches!(
            self,
            ClassLabel::Road | ClassLabel::ArtificialGround | ClassLabel::NaturalGround
        )
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn palette_is_a_bijection() {
        let colors: HashSet<_> = ClassLabel::ALL.iter().map(|c| c.color()).collect();
        assert_eq!(colors.len(), NUM_LABELS);
        for c in ClassLabel::ALL {
            assert_eq!(ClassLabel::from_color(c.color()), Some(c));
            assert_eq!(ClassLabel::from_index(c.index()), Some(c));
        }
        assert_eq!(ClassLabel::from_color([1, 2, 3]), None);
        assert_eq!(ClassLabel::from_index(7), None);
    }

    #[test]
    fn named_colors() {
        assert_eq!(ClassLabel::Building.color(), [0, 0, 255]);
        assert_eq!(ClassLabel::Tree.color(), [0, 255, 0]);
        assert_eq!(ClassLabel::Road.color(), [255, 255, 255]);
        assert_eq!(ClassLabel::NaturalGround.color(), [0, 255, 255]);
        assert_eq!(ClassLabel::ArtificialGround.color(), [255, 0, 0]);
        assert_eq!(ClassLabel::Car.color(), [255, 255, 0]);
        assert_eq!(ClassLabel::Unknown.color(), [0, 0, 0]);
    }
}
