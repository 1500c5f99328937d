//! Experiment configuration: TOML file, defaults, CLI overrides.

use std::path::Path;

use anyhow::{bail, Context};
use idd_core::estimator::{EstimatorKind, GainForm};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    PerSweep,
    ExitChart,
    MseOpenloop,
    CorrProbe,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::PerSweep => "per-sweep",
            Experiment::ExitChart => "exit-chart",
            Experiment::MseOpenloop => "mse-openloop",
            Experiment::CorrProbe => "corr-probe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    /// QAM order.
    pub modulation: usize,
    pub n_sc: usize,
    pub fft_size: usize,
    pub info_bytes: usize,
    pub n_itr: usize,
    pub rms_delay_ns: f64,
    pub tap_spacing_ns: f64,
    /// Training symbols; defaults to the next power of two `≥ N_t`.
    pub training_len: Option<usize>,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            n_tx: 2,
            n_rx: 2,
            modulation: 16,
            n_sc: 52,
            fft_size: 64,
            info_bytes: 200,
            n_itr: 7,
            rms_delay_ns: 50.0,
            tap_spacing_ns: 50.0,
            training_len: None,
        }
    }
}

impl LinkConfig {
    pub fn training_len(&self) -> usize {
        self.training_len.unwrap_or_else(|| self.n_tx.next_power_of_two())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Any of `perfect`, `initial`, `proposed`, `song`, `emdd`.
    pub kinds: Vec<String>,
    /// Puncturing constant; 2.5 for two streams and 2.0 otherwise if unset.
    pub c: Option<f64>,
    /// `information` or `covariance`.
    pub gain_form: String,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kinds: EstimatorKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            c: None,
            gain_form: "information".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub snr_db: Vec<f64>,
    pub packets: usize,
    /// Stop an SNR point for an estimator after this many packet errors.
    pub max_errors: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![10.0, 12.0, 14.0, 16.0],
            packets: 500,
            max_errors: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExitConfig {
    pub snr_db: Vec<f64>,
    pub packets: usize,
    /// Average only packets decoded without error.
    pub good_only: bool,
    /// Points of the measured transfer curves (0 disables them).
    pub transfer_points: usize,
    /// Coded bits per transfer-curve point.
    pub transfer_bits: usize,
}

impl Default for ExitConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![14.0],
            packets: 50,
            good_only: true,
            transfer_points: 11,
            transfer_bits: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpenLoopSection {
    pub snr_db: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub n_d: Vec<usize>,
    pub steps: usize,
    pub trials: usize,
}

impl Default for OpenLoopSection {
    fn default() -> Self {
        Self {
            snr_db: vec![14.0],
            sigma2: vec![0.0, 0.05, 0.1, 0.2, 0.5],
            n_d: vec![12, 6],
            steps: 30,
            trials: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrConfig {
    pub snr_db: Vec<f64>,
    /// Packets with at least one error to average over.
    pub erroneous_packets: usize,
    /// Upper bound on packets drawn while looking for errors.
    pub max_packets: usize,
}

impl Default for CorrConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![10.0],
            erroneous_packets: 50,
            max_packets: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// Write per-step estimator diagnostics to `diag.csv`.
    pub diag: bool,
    pub link: LinkConfig,
    pub estimator: EstimatorConfig,
    pub sweep: SweepConfig,
    pub exit: ExitConfig,
    pub openloop: OpenLoopSection,
    pub corr: CorrConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::PerSweep,
            seed: 1,
            workers: 0,
            diag: false,
            link: LinkConfig::default(),
            estimator: EstimatorConfig::default(),
            sweep: SweepConfig::default(),
            exit: ExitConfig::default(),
            openloop: OpenLoopSection::default(),
            corr: CorrConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub snr_db: Option<Vec<f64>>,
    pub estimator: Option<String>,
    pub c: Option<f64>,
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(snr) = &o.snr_db {
            self.sweep.snr_db = snr.clone();
            self.exit.snr_db = snr.clone();
            self.openloop.snr_db = snr.clone();
            self.corr.snr_db = snr.clone();
        }
        if let Some(e) = &o.estimator {
            self.estimator.kinds = vec![e.clone()];
        }
        if let Some(c) = o.c {
            self.estimator.c = Some(c);
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
    }

    pub fn kinds(&self) -> anyhow::Result<Vec<EstimatorKind>> {
        self.estimator
            .kinds
            .iter()
            .map(|s| s.parse::<EstimatorKind>().map_err(anyhow::Error::from))
            .collect()
    }

    pub fn c(&self) -> f64 {
        self.estimator
            .c
            .unwrap_or(if self.link.n_tx == 2 { 2.5 } else { 2.0 })
    }

    pub fn gain_form(&self) -> anyhow::Result<GainForm> {
        match self.estimator.gain_form.as_str() {
            "information" => Ok(GainForm::Information),
            "covariance" => Ok(GainForm::Covariance),
            other => bail!("unknown gain form '{other}'"),
        }
    }

    /// SNR points of the selected experiment.
    pub fn snr_points(&self) -> &[f64] {
        match self.experiment {
            Experiment::PerSweep => &self.sweep.snr_db,
            Experiment::ExitChart => &self.exit.snr_db,
            Experiment::MseOpenloop => &self.openloop.snr_db,
            Experiment::CorrProbe => &self.corr.snr_db,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let l = &self.link;
        if !(1..=4).contains(&l.n_tx) {
            bail!("n_tx must be in 1..=4, got {}", l.n_tx);
        }
        if l.n_rx < l.n_tx || l.n_rx > 8 {
            bail!("n_rx must be in n_tx..=8, got {}", l.n_rx);
        }
        if l.n_itr == 0 {
            bail!("n_itr must be at least 1");
        }
        if l.info_bytes == 0 {
            bail!("info_bytes must be positive");
        }
        if self.kinds()?.is_empty() {
            bail!("no estimator selected");
        }
        if !(self.c() >= 0.0) {
            bail!("puncturing constant c must be non-negative");
        }
        self.gain_form()?;
        let snr = self.snr_points();
        if snr.is_empty() || snr.iter().any(|s| !s.is_finite()) {
            bail!("at least one finite SNR point is required");
        }
        let counts = match self.experiment {
            Experiment::PerSweep => [self.sweep.packets, self.sweep.max_errors],
            Experiment::ExitChart => [self.exit.packets, 1],
            Experiment::MseOpenloop => [self.openloop.trials, self.openloop.steps],
            Experiment::CorrProbe => [self.corr.erroneous_packets, self.corr.max_packets],
        };
        if counts.contains(&0) {
            bail!("packet, trial and step counts must be positive");
        }
        if self.experiment == Experiment::MseOpenloop
            && (self.openloop.sigma2.is_empty() || self.openloop.n_d.is_empty() || self.openloop.n_d.contains(&0))
        {
            bail!("open-loop run needs sigma2 values and positive n_d values");
        }
        Ok(())
    }
}
