use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Offensive court regions, in the fixed order shared by every count vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Region {
    /// Above-the-break three.
    Atb,
    /// Left corner three.
    Lc3,
    /// Right corner three.
    Rc3,
    /// In the paint, outside the restricted area.
    Itp,
    /// Mid-range.
    Mid,
    /// Restricted area.
    Ra,
    /// Free throw line.
    Ft,
}

impl Region {
    pub const COUNT: usize = 7;

    pub const ALL: [Region; Region::COUNT] = [
        Region::Atb,
        Region::Lc3,
        Region::Rc3,
        Region::Itp,
        Region::Mid,
        Region::Ra,
        Region::Ft,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Region::Atb => "ATB",
            Region::Lc3 => "LC3",
            Region::Rc3 => "RC3",
            Region::Itp => "ITP",
            Region::Mid => "MID",
            Region::Ra => "RA",
            Region::Ft => "FT",
        }
    }

    pub fn point_value(self) -> u32 {
        match self {
            Region::Atb | Region::Lc3 | Region::Rc3 => 3,
            Region::Itp | Region::Mid | Region::Ra => 2,
            Region::Ft => 1,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Case-sensitive lookup of a region code.
    pub fn from_code(code: &str) -> Option<Region> {
        Region::ALL.into_iter().find(|r| r.code() == code)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Region {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Region::from_code(s).ok_or_else(|| format!("unknown region code `{s}`"))
    }
}

/// Ordered region labels and their point values.
///
/// Real data always uses [`RegionScheme::nba`]. Smaller schemes exist so the
/// model can be exercised on instances with fewer regions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawScheme")]
pub struct RegionScheme {
    regions: Vec<RegionSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    regions: Vec<RegionSpec>,
}

impl TryFrom<RawScheme> for RegionScheme {
    type Error = String;

    fn try_from(raw: RawScheme) -> Result<Self, String> {
        RegionScheme::custom(raw.regions.into_iter().map(|r| (r.code, r.points)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub code: String,
    pub points: u32,
}

impl RegionScheme {
    pub fn nba() -> Self {
        RegionScheme {
            regions: Region::ALL
                .iter()
                .map(|r| RegionSpec {
                    code: r.code().to_string(),
                    points: r.point_value(),
                })
                .collect(),
        }
    }

    /// Builds a custom scheme. Codes must be unique and nonempty.
    pub fn custom<S: Into<String>>(regions: impl IntoIterator<Item = (S, u32)>) -> Result<Self, String> {
        let regions: Vec<RegionSpec> = regions
            .into_iter()
            .map(|(code, points)| RegionSpec {
                code: code.into(),
                points,
            })
            .collect();
        if regions.is_empty() {
            return Err("region scheme needs at least one region".into());
        }
        for (i, r) in regions.iter().enumerate() {
            if r.code.is_empty() {
                return Err("empty region code".into());
            }
            if regions[..i].iter().any(|o| o.code == r.code) {
                return Err(format!("duplicate region code `{}`", r.code));
            }
        }
        Ok(RegionScheme { regions })
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.regions.iter().map(|r| r.code.as_str())
    }

    pub fn points(&self) -> Vec<u32> {
        self.regions.iter().map(|r| r.points).collect()
    }

    pub fn max_points(&self) -> u32 {
        self.regions.iter().map(|r| r.points).max().unwrap_or(0)
    }

    pub fn min_points(&self) -> u32 {
        self.regions.iter().map(|r| r.points).min().unwrap_or(0)
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.code == code)
    }

    pub fn spec(&self, k: usize) -> &RegionSpec {
        &self.regions[k]
    }
}
