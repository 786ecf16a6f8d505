//! On-disk description of a Bernoulli map.
//!
//! ```toml
//! dimension = 1
//!
//! [[cells]]
//! corner = [0.0]
//! side = "1/3"
//! orthogonal = [[1.0]]
//! offset = [0.0]
//! target_cube = [0]
//! ```
//!
//! Scalars may be written as numbers or as exact `"p/q"` strings. Exact side
//! lengths feed the rational evaluation of the theoretical diffusivities.

use num::{BigInt, BigRational, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::{BernoulliMap, MapError, PartitionCell};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

impl Scalar {
    pub fn exact(&self) -> Result<BigRational, MapError> {
        match self {
            Scalar::Number(x) => BigRational::from_float(*x)
                .ok_or_else(|| MapError::Parse(format!("non-finite scalar {x}"))),
            Scalar::Text(s) => parse_ratio(s),
        }
    }

    pub fn value(&self) -> Result<f64, MapError> {
        match self {
            Scalar::Number(x) => Ok(*x),
            Scalar::Text(s) => parse_ratio(s).map(|r| ratio_to_f64(&r)),
        }
    }
}

impl From<f64> for Scalar {
    fn from(x: f64) -> Self {
        Scalar::Number(x)
    }
}

impl From<&str> for Scalar {
    fn from(s: &str) -> Self {
        Scalar::Text(s.to_string())
    }
}

fn parse_ratio(s: &str) -> Result<BigRational, MapError> {
    let bad = || MapError::Parse(format!("cannot parse scalar {s:?}"));
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().map_err(|_| bad())?;
            let q: BigInt = q.trim().parse().map_err(|_| bad())?;
            if q.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(p, q))
        }
        None => {
            if let Ok(p) = s.parse::<BigInt>() {
                return Ok(BigRational::from_integer(p));
            }
            let x: f64 = s.parse().map_err(|_| bad())?;
            BigRational::from_float(x).ok_or_else(bad)
        }
    }
}

pub fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub corner: Vec<Scalar>,
    pub side: Scalar,
    /// Rows of the orthogonal matrix.
    pub orthogonal: Vec<Vec<f64>>,
    pub offset: Vec<Scalar>,
    pub target_cube: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub dimension: usize,
    pub cells: Vec<CellSpec>,
}

impl MapSpec {
    pub fn from_toml(text: &str) -> Result<Self, MapError> {
        toml::from_str(text).map_err(|e| MapError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("map spec serializes")
    }

    /// Builds the cells without running the assumption checks.
    pub fn assemble(&self) -> Result<BernoulliMap, MapError> {
        let d = self.dimension;
        if d == 0 {
            return Err(MapError::Parse("dimension must be positive".into()));
        }
        let mut cells = Vec::with_capacity(self.cells.len());
        for (i, c) in self.cells.iter().enumerate() {
            if c.corner.len() != d
                || c.offset.len() != d
                || c.target_cube.len() != d
                || c.orthogonal.len() != d
                || c.orthogonal.iter().any(|row| row.len() != d)
            {
                return Err(MapError::DimensionMismatch { cell: i });
            }
            let corner = c.corner.iter().map(Scalar::value).collect::<Result<Vec<_>, _>>()?;
            let offset = c.offset.iter().map(Scalar::value).collect::<Result<Vec<_>, _>>()?;
            let side_exact = c.side.exact()?;
            let rotation = c.orthogonal.iter().flatten().copied().collect();
            cells.push(
                PartitionCell::new(corner, c.side.value()?, rotation, offset, c.target_cube.clone())
                    .with_exact_side(side_exact),
            );
        }
        Ok(BernoulliMap::assemble(d, cells))
    }

    /// Builds and validates the map; invalid maps are refused.
    pub fn build(&self) -> Result<BernoulliMap, MapError> {
        let map = self.assemble()?;
        map.validated()
    }
}

impl BernoulliMap {
    pub fn to_spec(&self) -> MapSpec {
        let d = self.dim;
        MapSpec {
            dimension: d,
            cells: self
                .cells
                .iter()
                .map(|c| CellSpec {
                    corner: c.corner.iter().map(|&x| Scalar::Number(x)).collect(),
                    side: match &c.side_exact {
                        Some(r) => Scalar::Text(r.to_string()),
                        None => Scalar::Number(c.side),
                    },
                    orthogonal: c.rotation.chunks(d).map(<[f64]>::to_vec).collect(),
                    offset: c.offset.iter().map(|&x| Scalar::Number(x)).collect(),
                    target_cube: c.target.clone(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_exact_and_float_scalars() {
        assert_eq!(parse_ratio("1/3").unwrap(), BigRational::new(1.into(), 3.into()));
        assert_eq!(parse_ratio(" 2 ").unwrap(), BigRational::from_integer(2.into()));
        assert_eq!(parse_ratio("0.5").unwrap(), BigRational::new(1.into(), 2.into()));
        assert!(parse_ratio("1/0").is_err());
        assert!(parse_ratio("abc").is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"
dimension = 1
[[cells]]
corner = [0.0]
side = 1.0
orthogonal = [[1.0]]
offset = [0.0]
target_cube = [0]
colour = "red"
"#;
        assert!(MapSpec::from_toml(text).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let map = crate::map_core::examples::asymmetric();
        let spec = map.to_spec();
        let back = MapSpec::from_toml(&spec.to_toml()).unwrap().build().unwrap();
        assert_eq!(back.to_spec(), spec);
    }
}
