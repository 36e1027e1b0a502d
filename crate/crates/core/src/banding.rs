//! Red/amber/green fault bands from a predictive distribution.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splice::CountDistribution;

/// Band boundaries; counts `<= tau_ag` are green, counts `> tau_ra` are red.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandSpec {
    pub tau_ag: u64,
    pub tau_ra: u64,
    #[serde(default)]
    pub district: String,
    #[serde(default = "default_resolution")]
    pub resolution_hours: u32,
}

fn default_resolution() -> u32 {
    24
}

impl BandSpec {
    pub fn new(tau_ag: u64, tau_ra: u64) -> Result<Self> {
        let s = Self { tau_ag, tau_ra, district: String::new(), resolution_hours: 24 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_ag == 0 || self.tau_ag >= self.tau_ra {
            return Err(Error::Validation(format!(
                "band thresholds must satisfy 0 < tau_ag < tau_ra, got {} and {}",
                self.tau_ag, self.tau_ra
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandProbabilities {
    pub green: f64,
    pub amber: f64,
    pub red: f64,
}

impl BandProbabilities {
    pub fn as_array(&self) -> [f64; 3] {
        [self.green, self.amber, self.red]
    }

    pub fn get(&self, band: Band) -> f64 {
        match band {
            Band::Green => self.green,
            Band::Amber => self.amber,
            Band::Red => self.red,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Band {
    #[serde(rename = "G")]
    Green,
    #[serde(rename = "A")]
    Amber,
    #[serde(rename = "R")]
    Red,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Green, Band::Amber, Band::Red];

    /// Band containing an observed count.
    pub fn of_count(y: u64, spec: &BandSpec) -> Band {
        if y <= spec.tau_ag {
            Band::Green
        } else if y <= spec.tau_ra {
            Band::Amber
        } else {
            Band::Red
        }
    }

    pub fn code(self) -> char {
        match self {
            Band::Green => 'G',
            Band::Amber => 'A',
            Band::Red => 'R',
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

pub fn band_probs<D: CountDistribution + ?Sized>(dist: &D, spec: &BandSpec) -> BandProbabilities {
    let f_ag = dist.cdf(spec.tau_ag as i64);
    let f_ra = dist.cdf(spec.tau_ra as i64).max(f_ag);
    BandProbabilities { green: f_ag, amber: f_ra - f_ag, red: 1.0 - f_ra }
}

/// Communicated category: green above 0.8, else red above 0.2, else amber when
/// more likely than red, else the modal band with ties going to the more severe.
pub fn assign_band(p: &BandProbabilities) -> Band {
    if p.green > 0.8 {
        Band::Green
    } else if p.red > 0.2 {
        Band::Red
    } else if p.amber > p.red {
        Band::Amber
    } else {
        let mut best = Band::Red;
        for band in [Band::Amber, Band::Green] {
            if p.get(band) > p.get(best) {
                best = band;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splice::PredictiveDistribution;

    struct Uniform20;

    impl CountDistribution for Uniform20 {
        fn cdf(&self, y: i64) -> f64 {
            ((y + 1).clamp(0, 20)) as f64 / 20.0
        }
        fn quantile(&self, _p: f64) -> Result<u64> {
            unimplemented!()
        }
    }

    fn probs(g: f64, a: f64, r: f64) -> BandProbabilities {
        BandProbabilities { green: g, amber: a, red: r }
    }

    #[test]
    fn band_probability_examples() {
        let spec = BandSpec::new(5, 10).unwrap();
        let zero = PredictiveDistribution::bulk_only(&[(0.999, 0.0)]).unwrap();
        assert_eq!(band_probs(&zero, &spec).as_array(), [1.0, 0.0, 0.0]);
        let u = band_probs(&Uniform20, &BandSpec::new(4, 9).unwrap());
        assert_eq!(u.as_array(), [0.25, 0.25, 0.5]);
    }

    #[test]
    fn assignment_rules() {
        assert_eq!(assign_band(&probs(0.85, 0.10, 0.05)), Band::Green);
        assert_eq!(assign_band(&probs(0.50, 0.25, 0.25)), Band::Red);
        assert_eq!(assign_band(&probs(0.60, 0.30, 0.10)), Band::Amber);
        assert_eq!(assign_band(&probs(0.70, 0.10, 0.20)), Band::Green);
        // edges are strict
        assert_eq!(assign_band(&probs(0.8, 0.15, 0.05)), Band::Amber);
        assert_eq!(assign_band(&probs(0.4, 0.4, 0.2)), Band::Amber);
        // severity tie-break in the fallback
        assert_eq!(assign_band(&probs(0.6, 0.2, 0.2)), Band::Green);
        assert_eq!(assign_band(&probs(0.0, 0.0, 0.0)), Band::Red);
    }

    #[test]
    fn spec_validation() {
        assert!(BandSpec::new(0, 5).is_err());
        assert!(BandSpec::new(5, 5).is_err());
        assert!(BandSpec::new(5, 15).is_ok());
    }

    #[test]
    fn observed_band() {
        let s = BandSpec::new(5, 15).unwrap();
        assert_eq!(Band::of_count(5, &s), Band::Green);
        assert_eq!(Band::of_count(6, &s), Band::Amber);
        assert_eq!(Band::of_count(15, &s), Band::Amber);
        assert_eq!(Band::of_count(16, &s), Band::Red);
    }
}
