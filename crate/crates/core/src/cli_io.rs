//! Run configuration, report envelopes and atomic artifact writes shared
//! by the command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::largesieve::SupportMode;

/// Every tunable of an experiment run. All values are echoed into reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Target accuracy for L-function evaluation.
    pub target: f64,
    /// Enclosure radius for located zeros.
    pub enclosure: f64,
    /// Relative convergence tolerance for power iteration.
    pub power_tol: f64,
    /// Pass threshold for the detector identity residual.
    pub identity_tol: f64,
    /// Zero-free-region constant in `η = (c/6)/log qT`.
    pub c: f64,
    pub c3: f64,
    pub c4: f64,
    pub delta: f64,
    pub z: f64,
    /// `ε₀ … ε₄` of the sieve parameter chain.
    pub eps: [f64; 5],
    /// Scalar ε for the κ chain and torsion exponents.
    pub epsilon: f64,
    pub mode: SupportMode,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            target: 1e-12,
            enclosure: 1e-8,
            power_tol: 1e-6,
            identity_tol: 1e-6,
            c: 0.1,
            c3: 1.0 / 24.0,
            c4: 1.0,
            delta: 0.1,
            z: 4.0,
            eps: [0.1; 5],
            epsilon: 0.01,
            mode: SupportMode::Desk,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

const KEYS: [&str; 15] = [
    "target",
    "enclosure",
    "power_tol",
    "identity_tol",
    "c",
    "c3",
    "c4",
    "delta",
    "z",
    "eps",
    "epsilon",
    "mode",
    "seed",
    "out",
    "threads",
];

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Parse {
            line,
            msg: format!("{key}: {v:?} is not a finite number"),
        })
}

fn in_range(key: &str, v: f64, ok: bool, want: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Range(format!("{key} = {v} must be {want}")))
    }
}

impl RunConfig {
    /// Parse `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<(Self, Option<usize>)> {
        let mut cfg = RunConfig::default();
        let mut threads = None;
        let mut c3_set = false;
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected `key = value`, got {body:?}"),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown key {k:?}"),
                });
            }
            if !seen.insert(k.to_string()) {
                return Err(Error::Parse {
                    line,
                    msg: format!("duplicate key {k:?}"),
                });
            }
            match k {
                "target" => cfg.target = parse_f64(line, k, v)?,
                "enclosure" => cfg.enclosure = parse_f64(line, k, v)?,
                "power_tol" => cfg.power_tol = parse_f64(line, k, v)?,
                "identity_tol" => cfg.identity_tol = parse_f64(line, k, v)?,
                "c" => cfg.c = parse_f64(line, k, v)?,
                "c3" => {
                    cfg.c3 = parse_f64(line, k, v)?;
                    c3_set = true;
                }
                "c4" => cfg.c4 = parse_f64(line, k, v)?,
                "delta" => cfg.delta = parse_f64(line, k, v)?,
                "z" => cfg.z = parse_f64(line, k, v)?,
                "epsilon" => cfg.epsilon = parse_f64(line, k, v)?,
                "eps" => {
                    let parts: Vec<&str> = v
                        .trim_start_matches('[')
                        .trim_end_matches(']')
                        .split(',')
                        .map(str::trim)
                        .collect();
                    if parts.len() != 5 {
                        return Err(Error::Parse {
                            line,
                            msg: format!("eps needs 5 comma-separated values, got {}", parts.len()),
                        });
                    }
                    for (j, p) in parts.iter().enumerate() {
                        cfg.eps[j] = parse_f64(line, k, p)?;
                    }
                }
                "mode" => {
                    cfg.mode = match v {
                        "paper" => SupportMode::Paper,
                        "desk" => SupportMode::Desk,
                        _ => {
                            return Err(Error::Parse {
                                line,
                                msg: format!("mode must be paper or desk, got {v:?}"),
                            })
                        }
                    }
                }
                "seed" => {
                    cfg.seed = v.parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("seed: {v:?} is not an unsigned integer"),
                    })?
                }
                "threads" => {
                    threads = Some(
                        v.parse::<usize>()
                            .ok()
                            .filter(|&t| t >= 1)
                            .ok_or_else(|| Error::Parse {
                                line,
                                msg: format!("threads: {v:?} is not a positive integer"),
                            })?,
                    )
                }
                "out" => cfg.out = PathBuf::from(v),
                _ => unreachable!("key list checked above"),
            }
        }
        if !c3_set {
            cfg.c3 = cfg.c4.sqrt() / 24.0;
        }
        cfg.validate()?;
        Ok((cfg, threads))
    }

    pub fn validate(&self) -> Result<()> {
        in_range(
            "target",
            self.target,
            (1e-14..=1e-2).contains(&self.target),
            "in [1e-14, 1e-2]",
        )?;
        in_range(
            "enclosure",
            self.enclosure,
            self.enclosure > 0.0 && self.enclosure <= 1e-3,
            "in (0, 1e-3]",
        )?;
        in_range(
            "power_tol",
            self.power_tol,
            self.power_tol > 0.0 && self.power_tol < 1.0,
            "in (0, 1)",
        )?;
        in_range("identity_tol", self.identity_tol, self.identity_tol > 0.0, "positive")?;
        in_range("c", self.c, self.c > 0.0, "positive")?;
        in_range("c3", self.c3, self.c3 > 0.0, "positive")?;
        in_range("c4", self.c4, self.c4 > 0.0, "positive")?;
        in_range(
            "delta",
            self.delta,
            self.delta > 0.0 && self.delta < 0.25,
            "in (0, 1/4)",
        )?;
        in_range("z", self.z, self.z >= 1.0, "at least 1")?;
        in_range(
            "eps",
            self.eps[0],
            self.eps[0] > 0.0 && self.eps[0] < 0.5,
            "eps0 in (0, 1/2)",
        )?;
        for (j, &e) in self.eps.iter().enumerate().skip(1) {
            in_range("eps", e, e > 0.0, &format!("positive (eps{j})"))?;
        }
        in_range(
            "epsilon",
            self.epsilon,
            self.epsilon > 0.0 && self.epsilon < 1.0,
            "in (0, 1)",
        )?;
        Ok(())
    }

    pub fn rng(&self) -> SplitMix64 {
        SplitMix64::seed_from_u64(self.seed)
    }
}

/// Read and parse a config file.
pub fn parse_config(path: &Path) -> Result<(RunConfig, Option<usize>)> {
    RunConfig::parse(&fs::read_to_string(path)?)
}

/// Report wrapper: the command, the resolved configuration and the result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    /// Command-line arguments specific to the subcommand.
    pub args: serde_json::Value,
    pub passed: bool,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &str, config: &RunConfig, args: serde_json::Value, passed: bool, result: T) -> Self {
        Report {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            args,
            passed,
            result,
        }
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }
}

/// Write `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("{} has no file name", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_core::RngCore;

    #[test]
    fn empty_is_default() {
        let (cfg, threads) = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(threads, None);
        let (cfg, _) = RunConfig::parse("# only a comment\n\n   \n").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn values_and_errors() {
        let (cfg, t) =
            RunConfig::parse("c = 0.2 # override\nmode = paper\neps = [0.2, 0.1, 0.1, 0.1, 0.3]\nthreads = 2\n")
                .unwrap();
        assert_eq!(cfg.c, 0.2);
        assert_eq!(cfg.mode, SupportMode::Paper);
        assert_eq!(cfg.eps, [0.2, 0.1, 0.1, 0.1, 0.3]);
        assert_eq!(t, Some(2));
        assert!(matches!(RunConfig::parse("delta = 0.3"), Err(Error::Range(m)) if m.starts_with("delta")));
        assert!(matches!(
            RunConfig::parse("c = 1\nbogus = 2"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(RunConfig::parse("\n\nc 1"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(RunConfig::parse("c = x"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            RunConfig::parse("c = 1\nc = 2"),
            Err(Error::Parse { line: 2, .. })
        ));
        let (cfg, _) = RunConfig::parse("c4 = 4").unwrap();
        assert_eq!(cfg.c3, 2.0 / 24.0);
    }

    #[test]
    fn report_round_trip() {
        let cfg = RunConfig::default();
        let rep = Report::new("constants", &cfg, serde_json::json!({"n": 1}), true, vec![1.5, 2.5]);
        let bytes = rep.to_json().unwrap();
        let back: Report<Vec<f64>> = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(back, rep);
        back.config.validate().unwrap();
    }

    #[test]
    fn atomic_write() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn seeded_stream() {
        let mut a = RunConfig::default().rng();
        let mut b = RunConfig::default().rng();
        assert_eq!(a.next_u64(), b.next_u64());
        // SplitMix64 reference output for seed 0.
        let mut r = SplitMix64::seed_from_u64(0);
        assert_eq!(r.next_u64(), 0xe220a8397b1dcdaf);
    }
}
