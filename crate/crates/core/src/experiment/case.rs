use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Regime;
use crate::error::{Error, Result};
use crate::field::{flip_vertical, rotate90_ccw, FieldSeries, ScalarField2D};
use crate::geometry::SdfGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "W")]
    West,
    #[serde(rename = "N")]
    North,
}

impl Direction {
    pub fn tag(self) -> &'static str {
        match self {
            Direction::West => "W",
            Direction::North => "N",
        }
    }
}

/// Test-time transform applied to the truth series and the SDF.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    None,
    Rotate90Ccw,
    FlipVertical,
}

impl Transform {
    pub fn apply(self, field: &ScalarField2D) -> ScalarField2D {
        match self {
            Transform::None => field.clone(),
            Transform::Rotate90Ccw => rotate90_ccw(field),
            Transform::FlipVertical => flip_vertical(field),
        }
    }

    pub fn apply_series(self, series: &FieldSeries) -> Result<FieldSeries> {
        series.map_frames(|f| self.apply(f))
    }

    pub fn apply_sdf(self, sdf: &SdfGrid) -> SdfGrid {
        SdfGrid::from_field(&self.apply(&sdf.to_field()))
    }
}

/// `direction-city[-T|-P][-SDF][-CFD][-R|-VF]`, e.g. `N-Nii-P-SDF-R`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CaseId {
    pub direction: Direction,
    pub city: String,
    /// `None` only for reference runs (`W-Nii-CFD`).
    pub regime: Option<Regime>,
    pub cfd: bool,
    pub transform: Transform,
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::config("case", format!("`{s}`: {why}"));
        let mut parts = s.split('-').peekable();
        let direction = match parts.next() {
            Some("W") => Direction::West,
            Some("N") => Direction::North,
            _ => return Err(bad("direction must be W or N")),
        };
        let city = match parts.next() {
            Some(c) if !c.is_empty() && c.chars().all(|ch| ch.is_ascii_alphanumeric()) => c.to_string(),
            _ => return Err(bad("missing city")),
        };
        let domain = match parts.peek() {
            Some(&"T") => Some(false),
            Some(&"P") => Some(true),
            _ => None,
        };
        if domain.is_some() {
            parts.next();
        }
        let sdf = parts.next_if_eq(&"SDF").is_some();
        let cfd = parts.next_if_eq(&"CFD").is_some();
        let transform = match parts.next() {
            None => Transform::None,
            Some("R") => Transform::Rotate90Ccw,
            Some("VF") => Transform::FlipVertical,
            Some(other) => return Err(bad(&format!("unexpected segment `{other}`"))),
        };
        if parts.next().is_some() {
            return Err(bad("trailing segments"));
        }
        let regime = match (domain, sdf) {
            (Some(false), false) => Some(Regime::Total),
            (Some(false), true) => Some(Regime::TotalSdf),
            (Some(true), false) => Some(Regime::Patch),
            (Some(true), true) => Some(Regime::PatchSdf),
            (None, true) => return Err(bad("SDF needs T or P")),
            (None, false) => None,
        };
        if regime.is_none() && !cfd {
            return Err(bad("needs T or P unless it names a CFD reference"));
        }
        Ok(CaseId {
            direction,
            city,
            regime,
            cfd,
            transform,
        })
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.direction.tag(), self.city)?;
        if let Some(r) = self.regime {
            write!(f, "-{}", r.tag())?;
        }
        if self.cfd {
            f.write_str("-CFD")?;
        }
        match self.transform {
            Transform::None => Ok(()),
            Transform::Rotate90Ccw => f.write_str("-R"),
            Transform::FlipVertical => f.write_str("-VF"),
        }
    }
}

impl Serialize for CaseId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CaseId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
