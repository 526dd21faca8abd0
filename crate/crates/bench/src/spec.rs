//! Experiment spec files: one `key = value` per line, `#` starts a comment.
//!
//! ```text
//! id        = fig1
//! source    = random          # random | low-rank | sparse | file
//! dims      = 50x60x40
//! methods   = minimal, truncated-hosvd
//! schedule  = 10              # 5,10,20 or 5:100:5; an entry is k or pxqxr
//! seed      = 1
//! reps      = 100
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use tensor_krylov::krylov::{ExhaustedPolicy, Strategy};
use tensor_krylov::synth::ValueDistribution;
use tensor_krylov::tensor::DuplicatePolicy;
use tensor_krylov::{Dims, Mode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Minimal,
    Modified,
    Optimized,
    SmallMode,
    Contracted,
    Maximal,
    TruncatedHosvd,
    HosvdKrylov,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Minimal,
        Method::Modified,
        Method::Optimized,
        Method::SmallMode,
        Method::Contracted,
        Method::Maximal,
        Method::TruncatedHosvd,
        Method::HosvdKrylov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Minimal => "minimal",
            Method::Modified => "modified",
            Method::Optimized => "optimized",
            Method::SmallMode => "small-mode",
            Method::Contracted => "contracted",
            Method::Maximal => "maximal",
            Method::TruncatedHosvd => "truncated-hosvd",
            Method::HosvdKrylov => "hosvd-krylov",
        }
    }

    /// Methods that grow every mode to the same size.
    pub fn cubical_only(self) -> bool {
        matches!(self, Method::Minimal | Method::Optimized | Method::SmallMode)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| anyhow!("unknown method '{s}'"))
    }
}

/// A rank schedule entry: `k` in every mode or `(p, q, r)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rank {
    Cubical(usize),
    Modes([usize; 3]),
}

impl Rank {
    pub fn per_mode(self) -> [usize; 3] {
        match self {
            Rank::Cubical(k) => [k; 3],
            Rank::Modes(r) => r,
        }
    }

    pub fn cubical(self) -> Option<usize> {
        match self {
            Rank::Cubical(k) => Some(k),
            Rank::Modes([p, q, r]) if p == q && q == r => Some(p),
            Rank::Modes(_) => None,
        }
    }
}

impl fmt::Display for Rank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rank::Cubical(k) => write!(f, "{k}"),
            Rank::Modes([p, q, r]) => write!(f, "{p}x{q}x{r}"),
        }
    }
}

impl FromStr for Rank {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.contains('x') {
            Ok(Rank::Modes(parse_triple(s)?))
        } else {
            Ok(Rank::Cubical(s.trim().parse().with_context(|| format!("bad rank '{s}'"))?))
        }
    }
}

pub fn parse_triple(s: &str) -> Result<[usize; 3]> {
    let parts: Vec<&str> = s.split('x').map(str::trim).collect();
    if parts.len() != 3 {
        bail!("expected three sizes like 10x20x30, got '{s}'");
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().with_context(|| format!("bad size '{p}' in '{s}'"))?;
    }
    Ok(out)
}

/// `5,10,20` or `start:stop:step` (inclusive), mixed freely.
pub fn parse_schedule(s: &str) -> Result<Vec<Rank>> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        if item.contains(':') {
            let nums: Vec<usize> = item
                .split(':')
                .map(|t| t.trim().parse().with_context(|| format!("bad range '{item}'")))
                .collect::<Result<_>>()?;
            let (start, stop, step) = match nums[..] {
                [a, b] => (a, b, 1),
                [a, b, c] if c > 0 => (a, b, c),
                _ => bail!("bad range '{item}'"),
            };
            out.extend((start..=stop).step_by(step).map(Rank::Cubical));
        } else {
            out.push(item.parse()?);
        }
    }
    if out.is_empty() {
        bail!("empty rank schedule");
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    /// Gaussian dense tensor.
    Random { dims: Dims },
    LowRank { dims: Dims, ranks: [usize; 3] },
    Sparse {
        dims: Dims,
        nnz: usize,
        distribution: ValueDistribution,
        single_per_tube: bool,
    },
    File { path: PathBuf, duplicates: DuplicatePolicy },
}

impl Source {
    /// Generated sources are redrawn for every repetition.
    pub fn is_generated(&self) -> bool {
        !matches!(self, Source::File { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StartPolicy {
    Random,
    FibreMean,
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub id: String,
    pub source: Source,
    pub methods: Vec<Method>,
    pub schedule: Vec<Rank>,
    pub seed: u64,
    pub reps: usize,
    pub start: StartPolicy,
    pub strategy: Strategy,
    pub exhausted: ExhaustedPolicy,
    pub small_mode: Option<Mode>,
    pub tol: f64,
    pub output: Option<PathBuf>,
    pub archive_dir: Option<PathBuf>,
}

const KEYS: &[&str] = &[
    "id", "source", "dims", "ranks", "nnz", "distribution", "single_per_tube", "path",
    "duplicates", "methods", "schedule", "seed", "reps", "start", "inner", "exhausted",
    "small_mode", "tol", "output", "archive",
];

fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
        let k = k.trim().to_ascii_lowercase();
        if !KEYS.contains(&k.as_str()) {
            bail!("line {}: unknown key '{k}'", n + 1);
        }
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            bail!("line {}: key '{k}' given twice", n + 1);
        }
    }
    Ok(map)
}

struct Fields {
    map: BTreeMap<String, String>,
    base: PathBuf,
}

impl Fields {
    fn get(&self, k: &str) -> Option<&str> {
        self.map.get(k).map(String::as_str)
    }

    fn req(&self, k: &str) -> Result<&str> {
        self.get(k).ok_or_else(|| anyhow!("missing key '{k}'"))
    }

    fn parsed<T: FromStr>(&self, k: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.get(k) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| anyhow!("key '{k}': {e}")),
        }
    }

    fn path(&self, k: &str) -> Option<PathBuf> {
        self.get(k).map(|p| self.base.join(p))
    }

    fn dims(&self) -> Result<Dims> {
        let [l, m, n] = parse_triple(self.req("dims")?)?;
        if l == 0 || m == 0 || n == 0 {
            bail!("dims must be positive");
        }
        Ok(Dims::new(l, m, n))
    }
}

impl ExperimentSpec {
    /// Relative paths are resolved against `base` (the spec file's directory).
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let f = Fields {
            map: parse_kv(text)?,
            base: base.to_path_buf(),
        };
        let source = match f.req("source")? {
            "random" => Source::Random { dims: f.dims()? },
            "low-rank" => Source::LowRank {
                dims: f.dims()?,
                ranks: parse_triple(f.req("ranks")?)?,
            },
            "sparse" => Source::Sparse {
                dims: f.dims()?,
                nnz: f.parsed("nnz", 0)?,
                distribution: f.parsed("distribution", ValueDistribution::Gaussian)?,
                single_per_tube: f.parsed("single_per_tube", false)?,
            },
            "file" => Source::File {
                path: f.path("path").ok_or_else(|| anyhow!("source = file needs a path"))?,
                duplicates: match f.get("duplicates").unwrap_or("sum") {
                    "sum" => DuplicatePolicy::Sum,
                    "reject" => DuplicatePolicy::Reject,
                    other => bail!("unknown duplicate policy '{other}'"),
                },
            },
            other => bail!("unknown source '{other}'"),
        };
        let methods = f
            .req("methods")?
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Method>>>()?;
        if methods.is_empty() {
            bail!("no methods given");
        }
        let start = match f.get("start").unwrap_or("random") {
            "random" => StartPolicy::Random,
            "fibre-mean" => StartPolicy::FibreMean,
            other => match other.strip_prefix("file:") {
                Some(p) => StartPolicy::File(f.base.join(p.trim())),
                None => bail!("unknown start policy '{other}'"),
            },
        };
        let strategy = match f.get("inner").unwrap_or("3") {
            "exact" => Strategy::ExactHosvd,
            t => Strategy::InnerKrylov(t.parse().with_context(|| format!("bad inner steps '{t}'"))?),
        };
        let exhausted = match f.get("exhausted").unwrap_or("random") {
            "random" => ExhaustedPolicy::RandomCombination,
            "cyclic" => ExhaustedPolicy::Cyclic,
            "optimized" => ExhaustedPolicy::Optimized,
            other => bail!("unknown exhausted-mode policy '{other}'"),
        };
        let small_mode = match f.get("small_mode") {
            None => None,
            Some(v) => Some(
                v.parse::<usize>()
                    .ok()
                    .and_then(Mode::from_number)
                    .ok_or_else(|| anyhow!("small_mode must be 1, 2 or 3"))?,
            ),
        };
        let spec = ExperimentSpec {
            id: f.get("id").unwrap_or("experiment").to_string(),
            source,
            methods,
            schedule: parse_schedule(f.req("schedule")?)?,
            seed: f.parsed("seed", 0)?,
            reps: f.parsed("reps", 1)?,
            start,
            strategy,
            exhausted,
            small_mode,
            tol: f.parsed("tol", 1e-12)?,
            output: f.path("output"),
            archive_dir: f.path("archive"),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading spec {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("in spec {}", path.display()))
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            bail!("reps must be positive");
        }
        if let Source::LowRank { dims, .. } | Source::Random { dims } | Source::Sparse { dims, .. } = &self.source {
            // small-mode runs a cubical k past one short mode
            let short_ok = self.methods.contains(&Method::SmallMode);
            for r in &self.schedule {
                let per = r.per_mode();
                let short = Mode::ALL.iter().filter(|&&m| per[m.index()] > dims[m]).count();
                for m in Mode::ALL {
                    let fits = per[m.index()] <= dims[m] || (short_ok && short == 1 && r.cubical().is_some());
                    if per[m.index()] == 0 || !fits {
                        bail!("rank {r} does not fit the tensor dims {dims} in mode {m}");
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_forms() {
        let s = parse_schedule("5:20:5, 3x4x5").unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s[3], Rank::Cubical(20));
        assert_eq!(s[4], Rank::Modes([3, 4, 5]));
        assert!(parse_schedule("").is_err());
        assert!(parse_schedule("1:5:0").is_err());
    }

    #[test]
    fn spec_round() {
        let text = "id = t\nsource = low-rank # comment\ndims = 10x10x10\nranks = 3x3x3\n\
                    methods = minimal, hosvd-krylov\nschedule = 3\nreps = 2\nstart = fibre-mean\n";
        let s = ExperimentSpec::parse(text, Path::new("/tmp")).unwrap();
        assert_eq!(s.methods, vec![Method::Minimal, Method::HosvdKrylov]);
        assert_eq!(s.start, StartPolicy::FibreMean);
        assert_eq!(s.reps, 2);
        assert!(ExperimentSpec::parse("source = random\ndims = 2x2x2\nmethods = minimal\nschedule = 3", Path::new(".")).is_err());
        assert!(ExperimentSpec::parse("colour = red", Path::new(".")).is_err());
    }
}
