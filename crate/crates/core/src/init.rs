//! Weight initializers.
//!
//! Every scheme draws i.i.d. zero-mean entries whose spread depends on the
//! fan-in, the number of rows of a weight `W` in `y = x W`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sample_gaussian, sample_uniform, DenseMatrix, RngStream};

pub const DEFAULT_GINIT_D: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InitScheme {
    XavierNormal,
    XavierUniform,
    KaimingNormal,
    KaimingUniform,
    GInit { d: f64 },
    /// Debug scheme: rectangular identity.
    Identity,
    /// Debug scheme: fixed std regardless of fan.
    Gaussian { std: f64 },
}

impl InitScheme {
    /// G-Init with degree factor `d`. Values outside `(1, 2]` are accepted
    /// with a warning.
    pub fn g_init(d: f64) -> Result<Self> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::param(format!("g-init d must be positive, got {d}")));
        }
        if !(d > 1.0 && d <= 2.0) {
            log::warn!("g-init d = {d} lies outside the recommended range (1, 2]");
        }
        Ok(InitScheme::GInit { d })
    }

    pub fn name(&self) -> &'static str {
        match self {
            InitScheme::XavierNormal => "xavier-normal",
            InitScheme::XavierUniform => "xavier-uniform",
            InitScheme::KaimingNormal => "kaiming-normal",
            InitScheme::KaimingUniform => "kaiming-uniform",
            InitScheme::GInit { .. } => "g-init",
            InitScheme::Identity => "identity",
            InitScheme::Gaussian { .. } => "gaussian",
        }
    }

    /// Variance multiplier `c` in `Var[w] = c / fan`.
    fn gain(&self) -> Option<f64> {
        match *self {
            InitScheme::XavierNormal | InitScheme::XavierUniform => Some(1.0),
            InitScheme::KaimingNormal | InitScheme::KaimingUniform => Some(2.0),
            InitScheme::GInit { d } => Some(2.0 * d),
            InitScheme::Identity | InitScheme::Gaussian { .. } => None,
        }
    }

    pub fn is_normal(&self) -> bool {
        matches!(
            self,
            InitScheme::XavierNormal
                | InitScheme::KaimingNormal
                | InitScheme::GInit { .. }
                | InitScheme::Gaussian { .. }
        )
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitScheme::GInit { d } => write!(f, "g-init:{d}"),
            InitScheme::Gaussian { std } => write!(f, "gaussian:{std}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    /// Accepts the scheme names plus `g-init:<d>` and `gaussian:<std>`.
    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let number = |a: &str| {
            a.parse::<f64>()
                .map_err(|_| Error::param(format!("bad numeric argument in init scheme {s:?}")))
        };
        let plain = |scheme: InitScheme| match arg {
            None => Ok(scheme),
            Some(_) => Err(Error::param(format!("init scheme {head:?} takes no argument"))),
        };
        match head {
            "xavier-normal" => plain(InitScheme::XavierNormal),
            "xavier-uniform" => plain(InitScheme::XavierUniform),
            "kaiming-normal" => plain(InitScheme::KaimingNormal),
            "kaiming-uniform" => plain(InitScheme::KaimingUniform),
            "identity" => plain(InitScheme::Identity),
            "g-init" => InitScheme::g_init(arg.map(number).transpose()?.unwrap_or(DEFAULT_GINIT_D)),
            "gaussian" => {
                let std = number(arg.ok_or_else(|| Error::param("gaussian needs a std, e.g. gaussian:0.1"))?)?;
                if !(std >= 0.0) || !std.is_finite() {
                    return Err(Error::param(format!("gaussian std must be >= 0, got {std}")));
                }
                Ok(InitScheme::Gaussian { std })
            }
            _ => Err(Error::param(format!(
                "unknown init scheme {s:?}; expected one of xavier-normal, xavier-uniform, \
                 kaiming-normal, kaiming-uniform, g-init, identity, gaussian:<std>"
            ))),
        }
    }
}

impl TryFrom<String> for InitScheme {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<InitScheme> for String {
    fn from(s: InitScheme) -> String {
        s.to_string()
    }
}

/// Standard deviation of the entries drawn for a layer with fan-in `fan`.
pub fn target_std(scheme: InitScheme, fan: usize) -> Result<f64> {
    if fan == 0 {
        return Err(Error::param("fan must be >= 1"));
    }
    match scheme {
        InitScheme::Gaussian { std } => Ok(std),
        InitScheme::Identity => Err(Error::param("the identity scheme has no std")),
        s => Ok((s.gain().expect("gain-based scheme") / fan as f64).sqrt()),
    }
}

/// Entry variance `gain / fan` of a layer with fan-in `fan`.
pub fn target_variance(scheme: InitScheme, fan: usize) -> Result<f64> {
    if fan == 0 {
        return Err(Error::param("fan must be >= 1"));
    }
    match scheme {
        InitScheme::Gaussian { std } => Ok(std * std),
        InitScheme::Identity => Err(Error::param("the identity scheme has no variance")),
        s => Ok(s.gain().expect("gain-based scheme") / fan as f64),
    }
}

/// Half-width of the uniform law for the uniform schemes.
pub fn uniform_limit(scheme: InitScheme, fan: usize) -> Result<f64> {
    match scheme {
        InitScheme::XavierUniform | InitScheme::KaimingUniform => {
            Ok(target_std(scheme, fan)? * 3f64.sqrt())
        }
        _ => Err(Error::param(format!("{} is not a uniform scheme", scheme.name()))),
    }
}

/// Samples a `rows x cols` weight with fan-in `rows`.
pub fn sample_weight(rng: &mut RngStream, scheme: InitScheme, rows: usize, cols: usize) -> Result<DenseMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::shape(format!("cannot initialize a {rows}x{cols} weight")));
    }
    match scheme {
        InitScheme::Identity => Ok(DenseMatrix::eye(rows, cols)),
        InitScheme::XavierUniform | InitScheme::KaimingUniform => {
            let a = uniform_limit(scheme, rows)?;
            sample_uniform(rng, rows, cols, -a, a)
        }
        _ => sample_gaussian(rng, rows, cols, 0.0, target_std(scheme, rows)?),
    }
}

/// Predicted radius `std * sqrt(n)` of the eigenvalue disk of an `n x n`
/// weight. The identity scheme has every eigenvalue at 1.
pub fn predicted_disk_radius(scheme: InitScheme, n: usize) -> f64 {
    match scheme {
        InitScheme::Identity => 1.0,
        InitScheme::Gaussian { std } => std * (n as f64).sqrt(),
        s => s.gain().expect("gain-based scheme").sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_values() {
        let g = InitScheme::g_init(2.0).unwrap();
        assert!((target_std(g, 128).unwrap() - 0.176_776_695_296_636_9).abs() < 1e-15);
        let g = InitScheme::g_init(1.6).unwrap();
        assert!((target_std(g, 256).unwrap() - 0.111_803_398_874_989_5).abs() < 1e-15);
        assert_eq!(target_std(InitScheme::KaimingNormal, 2).unwrap(), 1.0);
        assert!((target_std(InitScheme::KaimingNormal, 128).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn zero_fan_rejected() {
        assert!(target_std(InitScheme::XavierNormal, 0).is_err());
        let mut rng = RngStream::new(0, 0);
        assert!(sample_weight(&mut rng, InitScheme::XavierNormal, 0, 3).is_err());
    }

    #[test]
    fn kaiming_uniform_fan_six() {
        let mut rng = RngStream::new(1, 0);
        let w = sample_weight(&mut rng, InitScheme::KaimingUniform, 6, 200_000).unwrap();
        assert!(w.as_slice().iter().all(|&v| v > -1.0 && v < 1.0));
        let var = w.sum_of_squares() / w.as_slice().len() as f64;
        assert!((var - 1.0 / 3.0).abs() < 0.01 / 3.0, "var {var}");
    }

    #[test]
    fn radii() {
        assert!((predicted_disk_radius(InitScheme::KaimingNormal, 7) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(predicted_disk_radius(InitScheme::GInit { d: 2.0 }, 100), 2.0);
        assert_eq!(predicted_disk_radius(InitScheme::XavierNormal, 3), 1.0);
        assert_eq!(predicted_disk_radius(InitScheme::Identity, 3), 1.0);
    }

    #[test]
    fn names_round_trip() {
        for s in [
            "xavier-normal",
            "xavier-uniform",
            "kaiming-normal",
            "kaiming-uniform",
            "identity",
            "g-init:1.6",
            "gaussian:0.5",
        ] {
            let scheme: InitScheme = s.parse().unwrap();
            assert_eq!(scheme.to_string(), s);
        }
        assert_eq!("g-init".parse::<InitScheme>().unwrap(), InitScheme::GInit { d: 2.0 });
        assert!("he-normal".parse::<InitScheme>().is_err());
        assert!("g-init:-1".parse::<InitScheme>().is_err());
        assert!("kaiming-normal:3".parse::<InitScheme>().is_err());
    }

    #[test]
    fn serde_uses_strings() {
        let json = serde_json::to_string(&InitScheme::GInit { d: 2.0 }).unwrap();
        assert_eq!(json, "\"g-init:2\"");
        let back: InitScheme = serde_json::from_str("\"kaiming-normal\"").unwrap();
        assert_eq!(back, InitScheme::KaimingNormal);
        assert!(serde_json::from_str::<InitScheme>("\"nope\"").is_err());
    }

    #[test]
    fn identity_is_rectangular_eye() {
        let w = sample_weight(&mut RngStream::new(0, 0), InitScheme::Identity, 2, 3).unwrap();
        assert_eq!(w.to_rows(), vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
    }
}
