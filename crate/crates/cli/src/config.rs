//! Flat TOML configuration merged with command-line overrides.
//!
//! Every key is optional; missing keys take the experiment defaults.
//!
//! ```toml
//! task = "c1"
//! method = "A2ER"
//! buffer = "O2S"
//! seeds = 20
//! q = [1.5, 1.0]
//! zeta = 0.2
//! ```

use std::path::Path;

use replay_core::buffers::CounterKind;
use replay_core::experiment::BufferKind;
use replay_core::trainer::Method;
use replay_core::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

/// Optional settings, from a file or from flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub task: Option<String>,
    pub method: Option<String>,
    pub buffer: Option<String>,
    pub cycles: Option<usize>,
    pub train_every: Option<usize>,
    pub updates_per_session: Option<usize>,
    pub fifo_capacity: Option<usize>,
    pub rs_capacity: Option<usize>,
    pub batch_size: Option<usize>,
    pub alpha_init: Option<f64>,
    pub beta_init: Option<f64>,
    pub rho: Option<f64>,
    pub lambda: Option<f64>,
    pub counter: Option<String>,
    pub q: Option<Vec<f64>>,
    pub zeta: Option<f64>,
    pub learning_rate: Option<f64>,
    pub lr_mult: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub seeds: Option<usize>,
    pub root_seed: Option<u64>,
    /// Accuracy both switched halves must reach to count as balanced.
    pub balance_level: Option<f64>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($field:ident),+) => {
        $(if $src.$field.is_some() { $dst.$field = $src.$field; })+
    };
}

impl Settings {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|source| CliError::ParseConfig {
            path: path.to_owned(),
            source,
        })
    }

    /// Values set in `other` win.
    pub fn merged(mut self, other: Settings) -> Self {
        let o = other;
        overlay!(
            self, o, task, method, buffer, cycles, train_every, updates_per_session,
            fifo_capacity, rs_capacity, batch_size, alpha_init, beta_init, rho, lambda, counter,
            q, zeta, learning_rate, lr_mult, hidden, seeds, root_seed, balance_level
        );
        self
    }

    /// Resolves to a validated experiment configuration.
    pub fn build(&self) -> CliResult<ExperimentConfig> {
        let task = self.task.as_deref().unwrap_or("c1");
        let mut c = ExperimentConfig::for_task(task)?;
        if let Some(m) = &self.method {
            c.method = m.parse::<Method>()?;
        }
        if let Some(b) = &self.buffer {
            c.buffer = b.parse::<BufferKind>()?;
        }
        if let Some(k) = &self.counter {
            c.counter = k.parse::<CounterKind>()?;
        }
        macro_rules! set {
            ($($field:ident),+) => { $(if let Some(v) = self.$field.clone() { c.$field = v; })+ };
        }
        set!(
            fifo_capacity, rs_capacity, batch_size, alpha_init, beta_init, rho, lambda, q, zeta,
            learning_rate, lr_mult, hidden, seeds, root_seed
        );
        if let Some(v) = self.cycles {
            c.schedule.cycles = v;
        }
        if let Some(v) = self.train_every {
            c.schedule.train_every = v;
        }
        if let Some(v) = self.updates_per_session {
            c.schedule.updates_per_session = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn balance_level(&self) -> f64 {
        self.balance_level.unwrap_or(replay_core::experiment::BALANCE_LEVEL)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_task() {
        let c = Settings::default().build().unwrap();
        assert_eq!(c.task_name, "c1");
        assert_eq!((c.fifo_capacity, c.rs_capacity, c.batch_size), (512, 512, 32));
        assert_eq!(c.q, vec![1.5, 1.0]);
        assert_eq!(c.schedule.train_every, 32);
        let r = Settings {
            task: Some("r2".into()),
            ..Default::default()
        };
        assert_eq!(r.build().unwrap().schedule.train_every, 16);
    }

    #[test]
    fn file_values_and_overrides() {
        let file = Settings::from_toml_str(
            "task = \"c3\"\nmethod = \"-C\"\nbuffer = \"O2S\"\nq = [1.2, 0.9]\nrho = 0.25\n",
        )
        .unwrap();
        let flags = Settings {
            method: Some("A2ER".into()),
            seeds: Some(3),
            ..Default::default()
        };
        let c = file.merged(flags).build().unwrap();
        assert_eq!(c.method, Method::A2er);
        assert_eq!(c.buffer, BufferKind::O2s);
        assert_eq!(c.q, vec![1.2, 0.9]);
        assert_eq!((c.rho, c.seeds), (0.25, 3));
    }

    #[test]
    fn bad_values_are_usage_errors() {
        assert!(Settings::from_toml_str("colour = 3").is_err());
        for s in [
            Settings { method: Some("XYZ".into()), ..Default::default() },
            Settings { buffer: Some("Q3S".into()), ..Default::default() },
            Settings { rho: Some(1.5), ..Default::default() },
            Settings { q: Some(vec![3.0]), buffer: Some("Q2S".into()), ..Default::default() },
            Settings { task: Some("c9".into()), ..Default::default() },
        ] {
            assert!(s.build().is_err(), "{s:?}");
        }
    }
}
