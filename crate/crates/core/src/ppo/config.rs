//! Run configuration: flat `key = value` text with dotted namespaces.

use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::dve::{BoostMode, CCLossConfig};
use crate::envs::{ChainParams, EnvKind, LevelSet};

/// Which critic the agent trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelMode {
    /// Single value head.
    Rl2,
    /// Clustered head without the sparsifying loss.
    Dve,
    /// Clustered head with the scheduled confusion-contribution loss.
    SparseDve,
}

impl ModelMode {
    pub fn name(&self) -> &'static str {
        match self {
            ModelMode::Rl2 => "rl2",
            ModelMode::Dve => "dve",
            ModelMode::SparseDve => "sparse-dve",
        }
    }
}

impl FromStr for ModelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rl2" => Ok(ModelMode::Rl2),
            "dve" => Ok(ModelMode::Dve),
            "sparse-dve" => Ok(ModelMode::SparseDve),
            other => Err(format!("unknown mode '{other}' (expected rl2, dve or sparse-dve)")),
        }
    }
}

/// Every hyperparameter of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: ModelMode,
    pub seed: u64,
    pub env: EnvKind,
    pub train_levels: LevelSet,
    pub eval_levels: LevelSet,

    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub lr: f64,
    pub max_grad_norm: f64,
    pub workers: usize,
    pub segment_length: usize,
    pub epochs: usize,
    pub minibatches: usize,
    pub total_steps: u64,

    pub encoder_width: usize,
    pub hidden: usize,
    pub n_clusters: usize,
    pub cc: CCLossConfig,
    /// Post-boost pretraining length as a fraction of `total_steps`.
    pub pretrain_fraction: f64,

    pub eval_episodes: usize,
    /// Evaluate every this many updates (and always after the last one).
    pub eval_every: usize,
    pub dump_episodes: usize,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: ModelMode::SparseDve,
            seed: 0,
            env: EnvKind::CorridorCoin,
            train_levels: LevelSet::from_count(500, 0),
            eval_levels: LevelSet::from_count(100, 1_000_000),
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            entropy_coef: 0.01,
            value_coef: 0.5,
            lr: 1e-3,
            max_grad_norm: 0.5,
            workers: 4,
            segment_length: 64,
            epochs: 4,
            minibatches: 2,
            total_steps: 200_000,
            encoder_width: 64,
            hidden: 64,
            n_clusters: 3,
            cc: CCLossConfig::pre_boost(),
            pretrain_fraction: 0.4,
            eval_episodes: 50,
            eval_every: 10,
            dump_episodes: 5,
            checkpoint_every: 50,
        }
    }
}

/// Keys accepted in config files and `--set` overrides, with a one-line meaning each.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("mode", "rl2 | dve | sparse-dve"),
    ("seed", "master seed"),
    ("env.name", "corridor-coin | fruit-line | chain-oracle"),
    ("env.train_levels", "number of training levels"),
    ("env.train_base_seed", "seed of the first training level"),
    ("env.train_seeds", "explicit comma-separated training level seeds (overrides count)"),
    ("env.eval_levels", "number of held-out evaluation levels"),
    ("env.eval_base_seed", "seed of the first evaluation level"),
    ("env.eval_seeds", "explicit comma-separated evaluation level seeds (overrides count)"),
    ("env.chain_length", "chain-oracle chain length"),
    ("env.chain_reward_means", "chain-oracle mixture component means, comma-separated"),
    ("env.chain_reward_std", "chain-oracle mixture component std"),
    ("env.chain_reveal", "chain-oracle cell where the group hint appears"),
    ("ppo.gamma", "discount factor"),
    ("ppo.lambda", "GAE lambda"),
    ("ppo.clip", "clip range of the probability ratio"),
    ("ppo.entropy_coef", "entropy bonus coefficient"),
    ("ppo.value_coef", "value loss coefficient"),
    ("ppo.lr", "Adam learning rate"),
    ("ppo.max_grad_norm", "global gradient norm clip (0 disables)"),
    ("ppo.workers", "parallel rollout workers"),
    ("ppo.segment_length", "steps per worker per update"),
    ("ppo.epochs", "passes over each batch"),
    ("ppo.minibatches", "minibatches per epoch (whole segments each)"),
    ("ppo.total_steps", "environment steps over the whole run"),
    ("net.encoder", "width of the observation encoder"),
    ("net.hidden", "LSTM hidden size"),
    ("dve.n_clusters", "number of value clusters"),
    ("dve.k1", "confusion coefficient"),
    ("dve.k2", "contribution coefficient"),
    ("dve.eps_log", "guard inside the logarithms"),
    ("dve.boost", "pre | post"),
    ("dve.ramp_fraction", "pre-boost ramp length as a fraction of total steps"),
    ("dve.window", "post-boost slope window (updates)"),
    ("dve.slope_threshold", "post-boost episode-length slope threshold"),
    ("dve.pretrain_fraction", "post-boost minimum pretraining as a fraction of total steps"),
    ("dve.assignments_only", "keep the sparsifying gradient out of the shared trunk"),
    ("eval.episodes", "episodes per evaluation"),
    ("eval.every", "updates between evaluations"),
    ("eval.dump_episodes", "evaluation episodes written to the trajectory dump"),
    ("checkpoint.every", "updates between checkpoints"),
];

/// Raw key/value pairs before they are resolved into a [`TrainConfig`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigText {
    entries: Vec<(String, String)>,
}

impl ConfigText {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, Vec<String>> {
        let mut out = Self::default();
        let mut errors = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Err(e) = out.set_pair(line) {
                errors.push(format!("line {}: {e}", n + 1));
            }
        }
        if errors.is_empty() {
            Ok(out)
        } else {
            Err(errors)
        }
    }

    /// Applies one `key=value` override; later values win.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), String> {
        let (k, v) = pair.split_once('=').ok_or_else(|| format!("expected key=value, got '{pair}'"))?;
        let (k, v) = (k.trim(), v.trim());
        if !CONFIG_KEYS.iter().any(|(key, _)| *key == k) {
            return Err(format!("unknown key '{k}'"));
        }
        self.entries.retain(|(key, _)| key != k);
        self.entries.push((k.to_string(), v.to_string()));
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Resolves into a validated config, reporting every problem at once.
    pub fn resolve(&self) -> Result<TrainConfig, Vec<String>> {
        let mut errors = Vec::new();
        let mut c = TrainConfig::default();

        macro_rules! read {
            ($key:expr, $field:expr) => {
                if let Some(v) = self.get($key) {
                    match v.parse() {
                        Ok(x) => $field = x,
                        Err(_) => errors.push(format!("{}: cannot parse '{}'", $key, v)),
                    }
                }
            };
        }

        if let Some(v) = self.get("mode") {
            match v.parse() {
                Ok(m) => c.mode = m,
                Err(e) => errors.push(format!("mode: {e}")),
            }
        }
        read!("seed", c.seed);

        let mut chain = ChainParams::default();
        read!("env.chain_length", chain.length);
        read!("env.chain_reward_std", chain.reward_std);
        read!("env.chain_reveal", chain.reveal);
        if let Some(v) = self.get("env.chain_reward_means") {
            match parse_list::<f64>(v) {
                Ok(list) if !list.is_empty() => chain.reward_means = list,
                _ => errors.push(format!("env.chain_reward_means: cannot parse '{v}'")),
            }
        }
        match self.get("env.name").unwrap_or("corridor-coin") {
            "chain-oracle" => c.env = EnvKind::ChainOracle(chain),
            other => match other.parse() {
                Ok(kind) => c.env = kind,
                Err(e) => errors.push(format!("env.name: {e}")),
            },
        }

        let mut train_count = c.train_levels.len();
        let mut train_base = 0u64;
        read!("env.train_levels", train_count);
        read!("env.train_base_seed", train_base);
        c.train_levels = LevelSet::from_count(train_count, train_base);
        if let Some(v) = self.get("env.train_seeds") {
            match parse_list::<u64>(v) {
                Ok(list) => c.train_levels = LevelSet::from_seeds(list),
                Err(_) => errors.push(format!("env.train_seeds: cannot parse '{v}'")),
            }
        }
        let mut eval_count = c.eval_levels.len();
        let mut eval_base = 1_000_000u64;
        read!("env.eval_levels", eval_count);
        read!("env.eval_base_seed", eval_base);
        c.eval_levels = LevelSet::from_count(eval_count, eval_base);
        if let Some(v) = self.get("env.eval_seeds") {
            match parse_list::<u64>(v) {
                Ok(list) => c.eval_levels = LevelSet::from_seeds(list),
                Err(_) => errors.push(format!("env.eval_seeds: cannot parse '{v}'")),
            }
        }

        read!("ppo.gamma", c.gamma);
        read!("ppo.lambda", c.lambda);
        read!("ppo.clip", c.clip);
        read!("ppo.entropy_coef", c.entropy_coef);
        read!("ppo.value_coef", c.value_coef);
        read!("ppo.lr", c.lr);
        read!("ppo.max_grad_norm", c.max_grad_norm);
        read!("ppo.workers", c.workers);
        read!("ppo.segment_length", c.segment_length);
        read!("ppo.epochs", c.epochs);
        read!("ppo.minibatches", c.minibatches);
        read!("ppo.total_steps", c.total_steps);
        read!("net.encoder", c.encoder_width);
        read!("net.hidden", c.hidden);
        read!("dve.n_clusters", c.n_clusters);
        read!("dve.pretrain_fraction", c.pretrain_fraction);
        read!("eval.episodes", c.eval_episodes);
        read!("eval.every", c.eval_every);
        read!("eval.dump_episodes", c.dump_episodes);
        read!("checkpoint.every", c.checkpoint_every);

        let boost = self.get("dve.boost").unwrap_or("pre");
        let mut cc = match boost {
            "pre" => CCLossConfig::pre_boost(),
            "post" => CCLossConfig::post_boost(0),
            other => {
                errors.push(format!("dve.boost: expected pre or post, got '{other}'"));
                CCLossConfig::pre_boost()
            }
        };
        read!("dve.k1", cc.k1);
        read!("dve.k2", cc.k2);
        read!("dve.eps_log", cc.eps_log);
        read!("dve.assignments_only", cc.assignments_only);
        match &mut cc.boost {
            BoostMode::Pre { ramp_fraction } => read!("dve.ramp_fraction", *ramp_fraction),
            BoostMode::Post { window, slope_threshold, .. } => {
                read!("dve.window", *window);
                read!("dve.slope_threshold", *slope_threshold);
            }
        }
        c.cc = cc;
        let pretrain = c.pretrain_steps();
        if let BoostMode::Post { min_pretrain_steps, .. } = &mut c.cc.boost {
            *min_pretrain_steps = pretrain;
        }

        if !errors.is_empty() {
            return Err(errors);
        }
        c.validate()?;
        Ok(c)
    }
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>, ()> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| ()))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    pub fn from_text(text: &str) -> Result<Self, Vec<String>> {
        ConfigText::parse(text)?.resolve()
    }

    /// Lists every violated constraint.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut e = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                e.push(msg.to_string());
            }
        };
        check(!self.train_levels.is_empty(), "env: training level set is empty");
        check(!self.eval_levels.is_empty(), "env: evaluation level set is empty");
        if let EnvKind::ChainOracle(p) = &self.env {
            check(p.length >= 2, "env.chain_length must be at least 2");
            check(p.reveal < p.length, "env.chain_reveal must be below env.chain_length");
            check(p.reward_std >= 0.0 && p.reward_std.is_finite(), "env.chain_reward_std must be >= 0");
        }
        check(self.gamma > 0.0 && self.gamma <= 1.0, "ppo.gamma must lie in (0, 1]");
        check((0.0..=1.0).contains(&self.lambda), "ppo.lambda must lie in [0, 1]");
        check(self.clip > 0.0 && self.clip < 1.0, "ppo.clip must lie in (0, 1)");
        check(self.entropy_coef >= 0.0, "ppo.entropy_coef must be >= 0");
        check(self.value_coef >= 0.0, "ppo.value_coef must be >= 0");
        check(self.lr > 0.0 && self.lr.is_finite(), "ppo.lr must be > 0");
        check(self.max_grad_norm >= 0.0, "ppo.max_grad_norm must be >= 0");
        check(self.workers >= 1, "ppo.workers must be >= 1");
        check(self.segment_length >= 1, "ppo.segment_length must be >= 1");
        check(self.epochs >= 1, "ppo.epochs must be >= 1");
        check(
            self.minibatches >= 1 && self.minibatches <= self.workers,
            "ppo.minibatches must lie in [1, ppo.workers]",
        );
        check(self.total_steps >= self.steps_per_update(), "ppo.total_steps must cover at least one update");
        check(self.encoder_width >= 1, "net.encoder must be >= 1");
        check(self.hidden >= 1, "net.hidden must be >= 1");
        check((1..=8).contains(&self.n_clusters), "dve.n_clusters must lie in [1, 8]");
        check(self.cc.k1 >= 0.0 && self.cc.k2 >= 0.0, "dve.k1 and dve.k2 must be >= 0");
        check(self.cc.eps_log >= 0.0, "dve.eps_log must be >= 0");
        check((0.0..=1.0).contains(&self.pretrain_fraction), "dve.pretrain_fraction must lie in [0, 1]");
        match self.cc.boost {
            BoostMode::Pre { ramp_fraction } => {
                check((0.0..=1.0).contains(&ramp_fraction), "dve.ramp_fraction must lie in [0, 1]")
            }
            BoostMode::Post { window, slope_threshold, .. } => {
                check(window >= 2, "dve.window must be >= 2");
                check(slope_threshold.is_finite(), "dve.slope_threshold must be finite");
            }
        }
        check(
            !(self.mode == ModelMode::SparseDve && self.gamma >= 1.0),
            "ppo.gamma = 1 is not allowed in sparse-dve mode",
        );
        check(self.eval_episodes >= 1, "eval.episodes must be >= 1");
        check(self.eval_every >= 1, "eval.every must be >= 1");
        check(self.checkpoint_every >= 1, "checkpoint.every must be >= 1");
        if e.is_empty() {
            Ok(())
        } else {
            Err(e)
        }
    }

    pub fn steps_per_update(&self) -> u64 {
        (self.workers * self.segment_length) as u64
    }

    pub fn total_updates(&self) -> u64 {
        self.total_steps / self.steps_per_update().max(1)
    }

    pub fn pretrain_steps(&self) -> u64 {
        (self.pretrain_fraction * self.total_steps as f64).round() as u64
    }

    /// Cluster count actually built; the single-head baseline always uses one.
    pub fn effective_clusters(&self) -> usize {
        match self.mode {
            ModelMode::Rl2 => 1,
            _ => self.n_clusters,
        }
    }

    /// Loss settings actually applied; only sparse-dve trains with the sparsifying term.
    /// Post-boost pretraining is always derived from `pretrain_fraction`.
    pub fn effective_cc(&self) -> CCLossConfig {
        let mut cc = self.cc.clone();
        if let BoostMode::Post { min_pretrain_steps, .. } = &mut cc.boost {
            *min_pretrain_steps = self.pretrain_steps();
        }
        if self.mode != ModelMode::SparseDve {
            cc.k1 = 0.0;
            cc.k2 = 0.0;
        }
        cc
    }

    /// Canonical text form; parsing it back gives the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("mode", self.mode.name().into());
        kv("seed", self.seed.to_string());
        kv("env.name", self.env.name().into());
        if let EnvKind::ChainOracle(p) = &self.env {
            kv("env.chain_length", p.length.to_string());
            kv("env.chain_reward_means", join(&p.reward_means));
            kv("env.chain_reward_std", p.reward_std.to_string());
            kv("env.chain_reveal", p.reveal.to_string());
        }
        kv("env.train_seeds", join(self.train_levels.seeds()));
        kv("env.eval_seeds", join(self.eval_levels.seeds()));
        kv("ppo.gamma", self.gamma.to_string());
        kv("ppo.lambda", self.lambda.to_string());
        kv("ppo.clip", self.clip.to_string());
        kv("ppo.entropy_coef", self.entropy_coef.to_string());
        kv("ppo.value_coef", self.value_coef.to_string());
        kv("ppo.lr", self.lr.to_string());
        kv("ppo.max_grad_norm", self.max_grad_norm.to_string());
        kv("ppo.workers", self.workers.to_string());
        kv("ppo.segment_length", self.segment_length.to_string());
        kv("ppo.epochs", self.epochs.to_string());
        kv("ppo.minibatches", self.minibatches.to_string());
        kv("ppo.total_steps", self.total_steps.to_string());
        kv("net.encoder", self.encoder_width.to_string());
        kv("net.hidden", self.hidden.to_string());
        kv("dve.n_clusters", self.n_clusters.to_string());
        kv("dve.k1", self.cc.k1.to_string());
        kv("dve.k2", self.cc.k2.to_string());
        kv("dve.eps_log", self.cc.eps_log.to_string());
        kv("dve.boost", self.cc.boost.name().into());
        match self.cc.boost {
            BoostMode::Pre { ramp_fraction } => kv("dve.ramp_fraction", ramp_fraction.to_string()),
            BoostMode::Post { window, slope_threshold, .. } => {
                kv("dve.window", window.to_string());
                kv("dve.slope_threshold", slope_threshold.to_string());
            }
        }
        kv("dve.pretrain_fraction", self.pretrain_fraction.to_string());
        kv("dve.assignments_only", self.cc.assignments_only.to_string());
        kv("eval.episodes", self.eval_episodes.to_string());
        kv("eval.every", self.eval_every.to_string());
        kv("eval.dump_episodes", self.dump_episodes.to_string());
        kv("checkpoint.every", self.checkpoint_every.to_string());
        s
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let text = "mode = dve\nenv.name = chain-oracle\nenv.chain_length = 5\ndve.boost = post\nppo.total_steps = 4096\n";
        let c = TrainConfig::from_text(text).unwrap();
        assert_eq!(c.mode, ModelMode::Dve);
        assert!(matches!(c.cc.boost, BoostMode::Post { min_pretrain_steps: 1638, .. }));
        let again = TrainConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
    }

    #[test]
    fn post_boost_uses_its_own_coefficients() {
        let c = TrainConfig::from_text("dve.boost = post").unwrap();
        assert_eq!((c.cc.k1, c.cc.k2), (0.5, 0.5));
        let c = TrainConfig::from_text("dve.boost = post\ndve.k1 = 0.2").unwrap();
        assert_eq!((c.cc.k1, c.cc.k2), (0.2, 0.5));
    }

    #[test]
    fn all_violations_reported_together() {
        let errs = TrainConfig::from_text("ppo.workers = 0\nppo.gamma = 1.5\nppo.clip = -1\ndve.n_clusters = 12").unwrap_err();
        assert!(errs.len() >= 4, "{errs:?}");
    }

    #[test]
    fn unknown_key_and_bad_value() {
        let errs = ConfigText::parse("foo = 1\nseed = x").and_then(|t| t.resolve()).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].contains("unknown key"));
        let errs = TrainConfig::from_text("seed = x\nppo.lr = nope").unwrap_err();
        assert_eq!(errs.len(), 2);
    }

    #[test]
    fn undiscounted_sparse_run_rejected() {
        assert!(TrainConfig::from_text("ppo.gamma = 1").is_err());
        assert!(TrainConfig::from_text("ppo.gamma = 1\nmode = dve").is_ok());
    }

    #[test]
    fn overrides_win() {
        let mut t = ConfigText::parse("seed = 1\n# comment\n\nmode = dve").unwrap();
        t.set_pair("seed=9").unwrap();
        let c = t.resolve().unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.effective_cc().k1, 0.0);
        assert_eq!(TrainConfig { mode: ModelMode::Rl2, ..c }.effective_clusters(), 1);
    }

    #[test]
    fn hash_changes_with_content() {
        let a = TrainConfig::default();
        let b = TrainConfig { seed: 1, ..TrainConfig::default() };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
