use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

pub const N_ELECTRODES: usize = 10;

/// The ten body-surface electrodes of a 12-lead ECG, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Electrode {
    LA,
    RA,
    LL,
    RL,
    V1,
    V2,
    V3,
    V4,
    V5,
    V6,
}

impl Electrode {
    pub const ALL: [Electrode; N_ELECTRODES] = [
        Electrode::LA,
        Electrode::RA,
        Electrode::LL,
        Electrode::RL,
        Electrode::V1,
        Electrode::V2,
        Electrode::V3,
        Electrode::V4,
        Electrode::V5,
        Electrode::V6,
    ];

    pub const CHEST: [Electrode; 6] = [
        Electrode::V1,
        Electrode::V2,
        Electrode::V3,
        Electrode::V4,
        Electrode::V5,
        Electrode::V6,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Electrode::LA => "LA",
            Electrode::RA => "RA",
            Electrode::LL => "LL",
            Electrode::RL => "RL",
            Electrode::V1 => "V1",
            Electrode::V2 => "V2",
            Electrode::V3 => "V3",
            Electrode::V4 => "V4",
            Electrode::V5 => "V5",
            Electrode::V6 => "V6",
        }
    }

    pub fn is_chest(self) -> bool {
        self.index() >= Electrode::V1.index()
    }
}

impl fmt::Display for Electrode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Electrode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Electrode> {
        Electrode::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown electrode '{s}'")))
    }
}

/// Positions of all ten electrodes in canonical order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElectrodeSet {
    pub positions: [Point3; N_ELECTRODES],
}

impl ElectrodeSet {
    pub fn new(positions: [Point3; N_ELECTRODES]) -> Self {
        ElectrodeSet { positions }
    }

    pub fn get(&self, e: Electrode) -> Point3 {
        self.positions[e.index()]
    }

    pub fn set(&mut self, e: Electrode, p: Point3) {
        self.positions[e.index()] = p;
    }

    pub fn from_slice(points: &[Point3]) -> Result<Self> {
        let positions: [Point3; N_ELECTRODES] =
            points.try_into().map_err(|_| Error::Size {
                context: "electrode set",
                expected: N_ELECTRODES,
                got: points.len(),
            })?;
        Ok(ElectrodeSet { positions })
    }

    pub fn to_cloud(&self) -> PointCloud {
        PointCloud::new(self.positions.to_vec())
    }

    pub fn map(&self, f: impl Fn(Point3) -> Point3) -> ElectrodeSet {
        ElectrodeSet {
            positions: self.positions.map(f),
        }
    }

    /// Left-right mirror image: x is negated and left/right limb leads swap.
    pub fn mirrored_x(&self) -> ElectrodeSet {
        let flip = |p: Point3| Point3::new(-p.x, p.y, p.z);
        let mut out = self.map(flip);
        out.positions.swap(Electrode::LA.index(), Electrode::RA.index());
        out.positions.swap(Electrode::LL.index(), Electrode::RL.index());
        out
    }
}
