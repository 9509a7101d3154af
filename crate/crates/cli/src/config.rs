//! Run configuration: defaults, overridden by a `key=value` file, overridden
//! by command-line flags.

use std::path::Path;

use oracle_forge::candidates::DEFAULT_K;
use oracle_forge::ranking::{Endpoint, HeuristicPriors, RankerConfig, ScorerBinding};

#[derive(Debug, Clone, PartialEq)]
pub enum ScorerChoice {
    Heuristic,
    External(Endpoint),
}

impl ScorerChoice {
    pub fn parse(s: &str) -> Result<Self, String> {
        if s == "heuristic" {
            Ok(ScorerChoice::Heuristic)
        } else {
            Endpoint::parse(s).map(ScorerChoice::External)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub k: usize,
    pub threshold: f64,
    pub exception_cutoff: f64,
    pub scorer: ScorerChoice,
    pub fallback_heuristic: bool,
    pub seed: u64,
    pub jobs: usize,
    pub strict: bool,
    pub scorer_timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ranker = RankerConfig::default();
        RunConfig {
            k: DEFAULT_K,
            threshold: ranker.threshold,
            exception_cutoff: ranker.exception_cutoff,
            scorer: ScorerChoice::Heuristic,
            fallback_heuristic: false,
            seed: 0,
            jobs: 0,
            strict: false,
            scorer_timeout_ms: 30_000,
            max_in_flight: 32,
        }
    }
}

/// Settings given explicitly, from a file or from flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub k: Option<usize>,
    pub threshold: Option<f64>,
    pub exception_cutoff: Option<f64>,
    pub scorer: Option<String>,
    pub fallback_heuristic: Option<bool>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub strict: Option<bool>,
    pub scorer_timeout_ms: Option<u64>,
    pub max_in_flight: Option<usize>,
}

fn value<T: std::str::FromStr>(key: &str, v: &str, lineno: usize) -> Result<T, String> {
    v.parse().map_err(|_| format!("config line {lineno}: invalid value `{v}` for `{key}`"))
}

impl Overrides {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_file_text(text: &str) -> Result<Overrides, String> {
        let mut o = Overrides::default();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, v) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| format!("config line {lineno}: expected key=value"))?;
            match key.replace('-', "_").as_str() {
                "k" => o.k = Some(value(key, v, lineno)?),
                "threshold" | "theta" => o.threshold = Some(value(key, v, lineno)?),
                "exception_cutoff" => o.exception_cutoff = Some(value(key, v, lineno)?),
                "scorer" => o.scorer = Some(v.to_string()),
                "fallback_heuristic" => o.fallback_heuristic = Some(value(key, v, lineno)?),
                "seed" => o.seed = Some(value(key, v, lineno)?),
                "jobs" => o.jobs = Some(value(key, v, lineno)?),
                "strict" => o.strict = Some(value(key, v, lineno)?),
                "scorer_timeout_ms" => o.scorer_timeout_ms = Some(value(key, v, lineno)?),
                "max_in_flight" => o.max_in_flight = Some(value(key, v, lineno)?),
                _ => return Err(format!("config line {lineno}: unknown key `{key}`")),
            }
        }
        Ok(o)
    }

    pub fn load(path: &Path) -> Result<Overrides, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Overrides::parse_file_text(&text)
    }

    /// `self` wins over `lower` wherever both are set.
    pub fn over(self, lower: Overrides) -> Overrides {
        Overrides {
            k: self.k.or(lower.k),
            threshold: self.threshold.or(lower.threshold),
            exception_cutoff: self.exception_cutoff.or(lower.exception_cutoff),
            scorer: self.scorer.or(lower.scorer),
            fallback_heuristic: self.fallback_heuristic.or(lower.fallback_heuristic),
            seed: self.seed.or(lower.seed),
            jobs: self.jobs.or(lower.jobs),
            strict: self.strict.or(lower.strict),
            scorer_timeout_ms: self.scorer_timeout_ms.or(lower.scorer_timeout_ms),
            max_in_flight: self.max_in_flight.or(lower.max_in_flight),
        }
    }

    pub fn resolve(self) -> Result<RunConfig, String> {
        let d = RunConfig::default();
        let cfg = RunConfig {
            k: self.k.unwrap_or(d.k),
            threshold: self.threshold.unwrap_or(d.threshold),
            exception_cutoff: self.exception_cutoff.unwrap_or(d.exception_cutoff),
            scorer: match self.scorer {
                Some(s) => ScorerChoice::parse(&s)?,
                None => d.scorer,
            },
            fallback_heuristic: self.fallback_heuristic.unwrap_or(d.fallback_heuristic),
            seed: self.seed.unwrap_or(d.seed),
            jobs: self.jobs.unwrap_or(d.jobs),
            strict: self.strict.unwrap_or(d.strict),
            scorer_timeout_ms: self.scorer_timeout_ms.unwrap_or(d.scorer_timeout_ms),
            max_in_flight: self.max_in_flight.unwrap_or(d.max_in_flight),
        };
        cfg.ranker().validate()?;
        if cfg.max_in_flight == 0 {
            return Err("max_in_flight must be at least 1".into());
        }
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn ranker(&self) -> RankerConfig {
        RankerConfig { threshold: self.threshold, k: self.k, exception_cutoff: self.exception_cutoff }
    }

    pub fn binding(&self) -> ScorerBinding {
        match &self.scorer {
            ScorerChoice::Heuristic => ScorerBinding::BuiltinHeuristic { seed: self.seed, priors: HeuristicPriors::default() },
            ScorerChoice::External(endpoint) => ScorerBinding::External {
                endpoint: endpoint.clone(),
                timeout_ms: self.scorer_timeout_ms,
                max_in_flight: self.max_in_flight,
            },
        }
    }
}
