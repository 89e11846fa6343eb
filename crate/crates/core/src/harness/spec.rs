//! Parsers for the graph, load and step-count specifier strings.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::balancers::LoadVector;
use crate::error::{Error, Result};
use crate::graph::{circulant_clique, cycle, hypercube, random_regular, torus, RegularGraph};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GraphSpec {
    Cycle(usize),
    Torus { side: usize, dim: usize },
    Hypercube(usize),
    Random { n: usize, d: usize, seed: u64 },
    Circlique { n: usize, d: usize },
    File(PathBuf),
}

impl GraphSpec {
    /// Builds the graph; file graphs also report their stored self-loop count.
    pub fn build(&self) -> Result<(RegularGraph, Option<usize>)> {
        let g = match self {
            GraphSpec::Cycle(n) => cycle(*n)?,
            GraphSpec::Torus { side, dim } => torus(*side, *dim)?,
            GraphSpec::Hypercube(dim) => hypercube(*dim)?,
            GraphSpec::Random { n, d, seed } => random_regular(*n, *d, *seed)?,
            GraphSpec::Circlique { n, d } => circulant_clique(*n, *d)?,
            GraphSpec::File(path) => {
                let (g, loops) = RegularGraph::read(path)?;
                return Ok((g, Some(loops)));
            }
        };
        Ok((g, None))
    }
}

fn num<T: FromStr>(spec: &str, field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Config(format!("`{spec}`: `{field}` is not a valid number")))
}

impl FromStr for GraphSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let parts: Vec<&str> = rest.split(':').collect();
        let spec = match (kind, parts.as_slice()) {
            ("cycle", [n]) => GraphSpec::Cycle(num(s, n)?),
            ("torus", [shape]) => {
                let (side, dim) = shape
                    .split_once('x')
                    .ok_or_else(|| Error::Config(format!("`{s}`: torus needs <side>x<dim>")))?;
                GraphSpec::Torus {
                    side: num(s, side)?,
                    dim: num(s, dim)?,
                }
            }
            ("hypercube", [dim]) => GraphSpec::Hypercube(num(s, dim)?),
            ("random", [n, d, seed]) => GraphSpec::Random {
                n: num(s, n)?,
                d: num(s, d)?,
                seed: num(s, seed)?,
            },
            ("circlique", [n, d]) => GraphSpec::Circlique {
                n: num(s, n)?,
                d: num(s, d)?,
            },
            ("file", _) if !rest.is_empty() => GraphSpec::File(PathBuf::from(rest)),
            _ => return Err(Error::Config(format!("unrecognised graph spec `{s}`"))),
        };
        Ok(spec)
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::Cycle(n) => write!(f, "cycle:{n}"),
            GraphSpec::Torus { side, dim } => write!(f, "torus:{side}x{dim}"),
            GraphSpec::Hypercube(dim) => write!(f, "hypercube:{dim}"),
            GraphSpec::Random { n, d, seed } => write!(f, "random:{n}:{d}:{seed}"),
            GraphSpec::Circlique { n, d } => write!(f, "circlique:{n}:{d}"),
            GraphSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl TryFrom<String> for GraphSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GraphSpec> for String {
    fn from(g: GraphSpec) -> String {
        g.to_string()
    }
}

/// Initial load. `Base` and `Auto` only apply to the adversarial balancers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LoadSpec {
    /// `K` tokens on node 0.
    Point(u64),
    /// `m` tokens spread as evenly as possible, lower indices first.
    Uniform(u64),
    /// `m` tokens each placed on a uniformly random node.
    Random {
        m: u64,
        seed: Option<u64>,
    },
    File(PathBuf),
    /// Base flow per edge for the odd-cycle rotor configuration.
    Base(u64),
    Auto,
}

impl LoadSpec {
    pub fn build(&self, n: usize, default_seed: u64) -> Result<LoadVector> {
        let x = match self {
            LoadSpec::Point(k) => {
                let mut x = vec![0; n];
                if let Some(first) = x.first_mut() {
                    *first = *k;
                }
                x
            }
            LoadSpec::Uniform(m) => {
                let (q, extra) = (m / n as u64, (m % n as u64) as usize);
                (0..n).map(|u| q + u64::from(u < extra)).collect()
            }
            LoadSpec::Random { m, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(default_seed));
                let mut x = vec![0; n];
                for _ in 0..*m {
                    x[rng.random_range(0..n)] += 1;
                }
                x
            }
            LoadSpec::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let x = text
                    .lines()
                    .enumerate()
                    .filter(|(_, l)| !l.trim().is_empty())
                    .map(|(i, l)| {
                        l.trim().parse::<u64>().map_err(|e| Error::Parse {
                            line: i + 1,
                            msg: format!("`{}`: {e}", l.trim()),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                if x.len() != n {
                    return Err(Error::Config(format!(
                        "load file {} has {} entries, graph has {n} nodes",
                        path.display(),
                        x.len()
                    )));
                }
                x
            }
            LoadSpec::Base(_) | LoadSpec::Auto => {
                return Err(Error::Config(format!(
                    "load spec `{self}` is only valid for adversarial balancers"
                )))
            }
        };
        Ok(LoadVector(x))
    }
}

impl FromStr for LoadSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(LoadSpec::Auto);
        }
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let parts: Vec<&str> = rest.split(':').collect();
        let spec = match (kind, parts.as_slice()) {
            ("point", [k]) => LoadSpec::Point(num(s, k)?),
            ("uniform", [m]) => LoadSpec::Uniform(num(s, m)?),
            ("random", [m]) => LoadSpec::Random {
                m: num(s, m)?,
                seed: None,
            },
            ("random", [m, seed]) => LoadSpec::Random {
                m: num(s, m)?,
                seed: Some(num(s, seed)?),
            },
            ("base", [l]) => LoadSpec::Base(num(s, l)?),
            ("file", _) if !rest.is_empty() => LoadSpec::File(PathBuf::from(rest)),
            _ => return Err(Error::Config(format!("unrecognised load spec `{s}`"))),
        };
        Ok(spec)
    }
}

impl fmt::Display for LoadSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadSpec::Point(k) => write!(f, "point:{k}"),
            LoadSpec::Uniform(m) => write!(f, "uniform:{m}"),
            LoadSpec::Random { m, seed: None } => write!(f, "random:{m}"),
            LoadSpec::Random { m, seed: Some(s) } => write!(f, "random:{m}:{s}"),
            LoadSpec::File(p) => write!(f, "file:{}", p.display()),
            LoadSpec::Base(l) => write!(f, "base:{l}"),
            LoadSpec::Auto => f.write_str("auto"),
        }
    }
}

impl TryFrom<String> for LoadSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LoadSpec> for String {
    fn from(l: LoadSpec) -> String {
        l.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Steps {
    Fixed(usize),
    /// `⌈16 ln(nK)/μ⌉` for the instance.
    Auto,
}

impl FromStr for Steps {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" | "auto(T)" => Ok(Steps::Auto),
            _ => Ok(Steps::Fixed(num(s, s)?)),
        }
    }
}

impl fmt::Display for Steps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Steps::Fixed(n) => write!(f, "{n}"),
            Steps::Auto => f.write_str("auto"),
        }
    }
}

impl TryFrom<String> for Steps {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Steps> for String {
    fn from(s: Steps) -> String {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_specs_round_trip() {
        for s in [
            "cycle:8",
            "torus:8x2",
            "hypercube:6",
            "random:128:4:7",
            "circlique:8:4",
            "file:/tmp/g.txt",
        ] {
            assert_eq!(s.parse::<GraphSpec>().unwrap().to_string(), s);
        }
        for bad in [
            "cycle",
            "cycle:x",
            "torus:8",
            "random:1:2",
            "moebius:3",
            "file:",
        ] {
            assert!(
                matches!(bad.parse::<GraphSpec>(), Err(Error::Config(_))),
                "{bad}"
            );
        }
        let (g, loops) = "torus:4x2".parse::<GraphSpec>().unwrap().build().unwrap();
        assert_eq!((g.n(), g.d(), loops), (16, 4, None));
    }

    #[test]
    fn load_specs() {
        assert_eq!(
            "point:9"
                .parse::<LoadSpec>()
                .unwrap()
                .build(3, 0)
                .unwrap()
                .0,
            vec![9, 0, 0]
        );
        assert_eq!(
            "uniform:7"
                .parse::<LoadSpec>()
                .unwrap()
                .build(3, 0)
                .unwrap()
                .0,
            vec![3, 2, 2]
        );
        let r = "random:100:5".parse::<LoadSpec>().unwrap();
        let a = r.build(10, 0).unwrap();
        assert_eq!(a.total(), 100);
        assert_eq!(a, r.build(10, 99).unwrap());
        assert_ne!(
            a,
            "random:100:6"
                .parse::<LoadSpec>()
                .unwrap()
                .build(10, 0)
                .unwrap()
        );
        assert!(LoadSpec::Auto.build(3, 0).is_err());
        for s in [
            "point:4",
            "uniform:8",
            "random:8",
            "random:8:1",
            "base:3",
            "auto",
        ] {
            assert_eq!(s.parse::<LoadSpec>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.txt");
        std::fs::write(&path, "1\n2\n\n3\n").unwrap();
        let spec = LoadSpec::File(path);
        assert_eq!(spec.build(3, 0).unwrap().0, vec![1, 2, 3]);
        assert!(matches!(spec.build(4, 0), Err(Error::Config(_))));
    }

    #[test]
    fn steps() {
        assert_eq!("auto".parse::<Steps>().unwrap(), Steps::Auto);
        assert_eq!("auto(T)".parse::<Steps>().unwrap(), Steps::Auto);
        assert_eq!("12".parse::<Steps>().unwrap(), Steps::Fixed(12));
        assert!("-1".parse::<Steps>().is_err());
    }
}
