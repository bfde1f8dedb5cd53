use serde::{Deserialize, Serialize};

pub const UNLABELED: u8 = 0;
pub const BUILDING: u8 = 1;
pub const ROAD: u8 = 2;
pub const SIDEWALK: u8 = 3;
pub const LANE_LINE: u8 = 4;
pub const VEHICLE: u8 = 5;
pub const PEDESTRIAN: u8 = 6;
pub const POLE: u8 = 7;
// only in the 13-class taxonomy
pub const FENCE: u8 = 8;
pub const VEGETATION: u8 = 9;
pub const WALL: u8 = 10;
pub const TRAFFIC_SIGN: u8 = 11;
pub const OTHER: u8 = 12;

const NAMES: [&str; 13] = [
    "unlabeled",
    "building",
    "road",
    "sidewalk",
    "lane-line",
    "vehicle",
    "pedestrian",
    "pole",
    "fence",
    "vegetation",
    "wall",
    "traffic-sign",
    "other",
];

/// Class taxonomy. `Desk8` is the default; `Full13` adds fences,
/// vegetation, walls, traffic signs and "other".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Taxonomy {
    #[default]
    Desk8,
    Full13,
}

impl Taxonomy {
    pub fn num_classes(self) -> usize {
        match self {
            Taxonomy::Desk8 => 8,
            Taxonomy::Full13 => 13,
        }
    }

    pub fn class_names(self) -> Vec<String> {
        NAMES[..self.num_classes()].iter().map(|s| s.to_string()).collect()
    }

    pub fn from_num_classes(n: usize) -> Option<Self> {
        match n {
            8 => Some(Taxonomy::Desk8),
            13 => Some(Taxonomy::Full13),
            _ => None,
        }
    }

    /// Classes whose pixels never move between frames.
    pub fn is_static(class: u8) -> bool {
        !matches!(class, VEHICLE | PEDESTRIAN)
    }
}
