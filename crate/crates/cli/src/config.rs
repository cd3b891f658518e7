//! Flat `key = value` run configuration with dotted keys.
//!
//! Every key read is echoed, with defaults filled in, so reports show the full
//! configuration that produced them. Unknown keys are rejected.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use sqfn_core::estimates::FamilySpec;
use sqfn_core::geom::{GeometryKind, GeometrySpec, GraphProfile};
use sqfn_core::{gradient_kernel, riesz_kernel, KernelSpec};

/// Keys that change where or how fast a run happens but not what it computes.
const UNDIGESTED: [&str; 2] = ["output_dir", "runtime.threads"];

#[derive(Debug, thiserror::Error)]
#[error("config: {0}")]
pub struct ConfigError(pub String);

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Parsed `key = value` pairs. Lines starting with `#` are comments.
#[derive(Debug, Default)]
pub struct RawConfig {
    map: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
    echo: RefCell<BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(err(format!("line {}: bad key {k:?}", n + 1)));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(err(format!("line {}: duplicate key {k}", n + 1)));
            }
        }
        Ok(Self { map, ..Self::default() })
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.map.insert(key.to_string(), value.to_string());
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.map.get(key).map(String::as_str)
    }

    fn record(&self, key: &str, value: String) {
        self.echo.borrow_mut().insert(key.to_string(), value);
    }

    fn get<T: FromStr + Display>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        let v = match self.raw(key) {
            Some(s) => s.parse().map_err(|_| err(format!("{key}: cannot parse {s:?}")))?,
            None => default,
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    fn opt<T: FromStr + Display>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        let v = match self.raw(key) {
            Some(s) => Some(s.parse().map_err(|_| err(format!("{key}: cannot parse {s:?}")))?),
            None => None,
        };
        self.record(key, v.as_ref().map(|v: &T| v.to_string()).unwrap_or_else(|| "auto".into()));
        Ok(v)
    }

    fn list(&self, key: &str, default: &str) -> Result<Vec<f64>, ConfigError> {
        let s = self.raw(key).unwrap_or(default);
        let v = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| err(format!("{key}: cannot parse {t:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        self.record(key, v.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        Ok(v)
    }

    fn unused(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.map.keys().filter(|k| !used.contains(*k)).cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelChoice {
    /// gradient of the Riesz kernel `x_j / |x|^2`
    RieszGrad { j: usize },
    /// the Riesz kernel itself
    Riesz { j: usize },
    Custom {
        expr: String,
        decay_const: f64,
        hoelder_exp: f64,
        decay_exp: f64,
    },
}

impl KernelChoice {
    pub fn build(&self) -> sqfn_core::Result<KernelSpec> {
        match self {
            Self::RieszGrad { j } => Ok(gradient_kernel(&riesz_kernel(*j, 1)?)),
            Self::Riesz { j } => Ok(KernelSpec::convolution(riesz_kernel(*j, 1)?, 1.0)),
            Self::Custom {
                expr,
                decay_const,
                hoelder_exp,
                decay_exp,
            } => KernelSpec::from_expr(expr, 2, *decay_const, *hoelder_exp, *decay_exp, 1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub geometry: GeometrySpec,
    pub kernel: KernelChoice,
    pub kappa: f64,
    pub depth: u32,
    /// defaults to four times the diameter of the cloud
    pub truncation_radius: Option<f64>,
    /// defaults to four times the cloud resolution
    pub eps_min: Option<f64>,
    pub p_list: Vec<f64>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
    pub c_assign: f64,
    pub family: FamilySpec,
    /// zero functions appended to the family
    pub family_zeros: usize,
    pub adr_radii: usize,
    pub adr_centers: usize,
    pub tb_big_c0: f64,
    pub tb_small_c0: f64,
    pub bpsfe_eta: f64,
    pub weak_p: f64,
    pub weak_balls: usize,
    pub weak_lambdas: usize,
    pub hp_p: f64,
    pub hp_atoms: usize,
    /// every key with its resolved value
    pub echo: BTreeMap<String, String>,
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(err(format!("{key} must be positive and finite, got {v}")))
    }
}

fn geometry(raw: &RawConfig, prefix: &str, seed: u64) -> Result<GeometrySpec, ConfigError> {
    let key = |k: &str| format!("{prefix}.{k}");
    let kind_name: String = raw.get(&key("kind"), "line".to_string())?;
    let resolution: usize = raw.get(&key("resolution"), 1024)?;
    let kind = match kind_name.as_str() {
        "line" => GeometryKind::Line {
            half_length: raw.get(&key("half_length"), 1.0)?,
        },
        "segment" => GeometryKind::Segment {
            length: raw.get(&key("length"), 1.0)?,
        },
        "circle" => GeometryKind::Circle {
            radius: raw.get(&key("radius"), 1.0)?,
        },
        "lipschitz_graph" => {
            let profile_name: String = raw.get(&key("profile"), "sawtooth".to_string())?;
            let profile = match profile_name.as_str() {
                "sawtooth" => GraphProfile::Sawtooth {
                    period: raw.get(&key("period"), 0.25)?,
                },
                "sine" => GraphProfile::Sine {
                    omega: raw.get(&key("omega"), 8.0)?,
                },
                "random" => GraphProfile::Random {
                    pieces: raw.get(&key("pieces"), 8)?,
                },
                other => return Err(err(format!("{}: unknown profile {other:?}", key("profile")))),
            };
            GeometryKind::LipschitzGraph {
                lip: raw.get(&key("lip"), 1.0)?,
                length: raw.get(&key("length"), 1.0)?,
                profile,
                split_slopes: raw.get(&key("split_slopes"), false)?,
            }
        }
        "cantor4" => GeometryKind::Cantor4 {
            generation: raw.get(&key("generation"), 4)?,
        },
        "composite" => {
            let names: String = raw.get(&key("parts"), String::new())?;
            let parts = names
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|name| geometry(raw, &format!("{prefix}.{name}"), seed))
                .collect::<Result<Vec<_>, _>>()?;
            if parts.is_empty() {
                return Err(err(format!("{} must name at least one part", key("parts"))));
            }
            GeometryKind::Composite { parts }
        }
        other => return Err(err(format!("{}: unknown geometry kind {other:?}", key("kind")))),
    };
    let offset = raw.list(&key("offset"), "0,0")?;
    let offset: [f64; 2] = offset
        .try_into()
        .map_err(|_| err(format!("{} needs two coordinates", key("offset"))))?;
    Ok(GeometrySpec::new(kind, resolution).with_seed(seed).with_offset(offset))
}

fn kernel(raw: &RawConfig) -> Result<KernelChoice, ConfigError> {
    let name: String = raw.get("kernel.name", "riesz-grad".to_string())?;
    let choice = match name.as_str() {
        "riesz-grad" => KernelChoice::RieszGrad {
            j: raw.get("kernel.j", 1)?,
        },
        "custom" => {
            let expr = raw
                .raw("kernel.expr")
                .ok_or_else(|| err("kernel.name = custom needs kernel.expr"))?
                .to_string();
            raw.record("kernel.expr", expr.clone());
            KernelChoice::Custom {
                expr,
                decay_const: raw.get("kernel.decay_const", 1.0)?,
                hoelder_exp: raw.get("kernel.hoelder_exp", 1.0)?,
                decay_exp: raw.get("kernel.decay_exp", 1.0)?,
            }
        }
        other => match other.strip_prefix("riesz:").map(str::parse) {
            Some(Ok(j)) => KernelChoice::Riesz { j },
            _ => return Err(err(format!("kernel.name: unknown kernel {other:?} (riesz-grad, riesz:j, custom)"))),
        },
    };
    choice.build().map_err(|e| err(format!("kernel: {e}")))?;
    Ok(choice)
}

impl RunConfig {
    /// Resolves and validates every setting. `raw` should already carry any
    /// command-line overrides.
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let seed = raw.get("seed", 0u64)?;
        let cfg = Self {
            geometry: geometry(raw, "geometry", seed)?,
            kernel: kernel(raw)?,
            kappa: raw.get("kappa", 1.0)?,
            depth: raw.get("depth", 5)?,
            truncation_radius: raw.opt("truncation_radius")?,
            eps_min: raw.opt("eps_min")?,
            p_list: raw.list("p_list", "1.5,2,3,4")?,
            seed,
            output_dir: PathBuf::from(raw.get("output_dir", "out".to_string())?),
            threads: raw.opt("runtime.threads")?,
            c_assign: raw.get("c_assign", 8.0)?,
            family: FamilySpec {
                indicators: raw.get("family.indicators", true)?,
                generations: Vec::new(),
                rademacher: raw.get("family.rademacher", 64)?,
                bumps: raw.get("family.bumps", 16)?,
            },
            family_zeros: raw.get("family.zeros", 0)?,
            adr_radii: raw.get("adr.radii", 10)?,
            adr_centers: raw.get("adr.centers", 64)?,
            tb_big_c0: raw.get("tb.big_c0", 32.0)?,
            tb_small_c0: raw.get("tb.small_c0", 1.0)?,
            bpsfe_eta: raw.get("bpsfe.eta", 0.5)?,
            weak_p: raw.get("weak.p", 1.0)?,
            weak_balls: raw.get("weak.balls", 3)?,
            weak_lambdas: raw.get("weak.lambdas", 40)?,
            hp_p: raw.get("hp.p", 0.8)?,
            hp_atoms: raw.get("hp.atoms", 32)?,
            echo: BTreeMap::new(),
        };
        let unknown = raw.unused();
        if !unknown.is_empty() {
            return Err(err(format!("unknown keys: {}", unknown.join(", "))));
        }
        cfg.validate()?;
        Ok(Self {
            echo: raw.echo.borrow().clone(),
            ..cfg
        })
    }

    fn validate(&self) -> Result<(), ConfigError> {
        positive("kappa", self.kappa)?;
        if let Some(r) = self.truncation_radius {
            positive("truncation_radius", r)?;
        }
        if let Some(e) = self.eps_min {
            positive("eps_min", e)?;
        }
        if !(1..=12).contains(&self.depth) {
            return Err(err(format!("depth must lie in 1..=12, got {}", self.depth)));
        }
        if !(self.c_assign > 1.0 && self.c_assign.is_finite()) {
            return Err(err(format!("c_assign must exceed 1, got {}", self.c_assign)));
        }
        if let Some(&p) = self.p_list.iter().find(|&&p| !(p > 1.0 && p.is_finite())) {
            return Err(err(format!("p_list entries must satisfy 1 < p < inf, got {p}")));
        }
        if self.threads == Some(0) {
            return Err(err("runtime.threads must be positive"));
        }
        positive("tb.big_c0", self.tb_big_c0)?;
        if !(self.tb_small_c0 > 0.0 && self.tb_small_c0 <= 1.0) {
            return Err(err(format!("tb.small_c0 must lie in (0, 1], got {}", self.tb_small_c0)));
        }
        if !(self.bpsfe_eta > 0.0 && self.bpsfe_eta <= 1.0) {
            return Err(err(format!("bpsfe.eta must lie in (0, 1], got {}", self.bpsfe_eta)));
        }
        positive("weak.p", self.weak_p)?;
        positive("hp.p", self.hp_p)?;
        if self.adr_radii < 2 || self.adr_centers == 0 || self.weak_balls == 0 || self.weak_lambdas < 2 {
            return Err(err("adr.radii, weak.lambdas must be at least 2; adr.centers, weak.balls at least 1"));
        }
        Ok(())
    }

    /// SHA-256 over the resolved `key=value` lines, leaving out keys that do
    /// not affect results.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.echo.iter().filter(|(k, _)| !UNDIGESTED.contains(&k.as_str())) {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_raw(&RawConfig::parse(text)?)
    }

    #[test]
    fn defaults_are_echoed() {
        let c = cfg("").unwrap();
        assert_eq!(c.geometry.kind_name(), "line");
        assert_eq!(c.echo["geometry.resolution"], "1024");
        assert_eq!(c.echo["eps_min"], "auto");
        assert_eq!(c.echo["p_list"], "1.5,2,3,4");
        assert_eq!(c.kernel, KernelChoice::RieszGrad { j: 1 });
    }

    #[test]
    fn nested_composite_and_comments() {
        let c = cfg("# two pieces\ngeometry.kind = composite\ngeometry.parts = a, b\n\
                     geometry.a.kind = segment\ngeometry.a.resolution = 64\n\
                     geometry.b.kind = circle\ngeometry.b.resolution = 64\ngeometry.b.offset = 3, 0\n")
        .unwrap();
        match &c.geometry.kind {
            GeometryKind::Composite { parts } => {
                assert_eq!(parts.len(), 2);
                assert_eq!(parts[1].offset, [3.0, 0.0]);
            }
            k => panic!("{k:?}"),
        }
    }

    #[test]
    fn bad_input_is_rejected() {
        for text in [
            "kappa = 0",
            "kappa = x",
            "depth = 0",
            "p_list = 1, 2",
            "geometry.kind = torus",
            "kernel.name = riesz:3",
            "kernel.name = custom",
            "kernel.name = custom\nkernel.expr = x0 / (",
            "colour = blue",
            "seed = 1\nseed = 2",
            "no equals sign",
            "c_assign = 1",
            "runtime.threads = 0",
        ] {
            assert!(cfg(text).is_err(), "{text:?} accepted");
        }
        assert!(cfg("kernel.name = riesz:2").is_ok());
        assert!(cfg("kernel.name = custom\nkernel.expr = x0 / r^2").is_ok());
    }

    #[test]
    fn digest_ignores_output_location_only() {
        let a = cfg("output_dir = a\nruntime.threads = 1").unwrap().digest();
        let b = cfg("output_dir = b").unwrap().digest();
        let c = cfg("seed = 3").unwrap().digest();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
        // spelling a default out does not change the digest
        assert_eq!(cfg("kappa = 1.0").unwrap().digest(), b);
    }
}
