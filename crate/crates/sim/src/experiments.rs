//! Drivers for the four experiments. Each returns its result table, an
//! optional diagnostics table and a JSON summary for the metadata file.

use idd_core::analysis::{eps_opt, gaussian_llr, j_inverse, open_loop_mse, MiAccumulator, OpenLoopConfig};
use idd_core::estimator::{EstimatorKind, GainForm, StepReport, Tag};
use idd_core::pipeline::{DiagSummary, StageMi};
use idd_core::{Cx, LlrFrame, L_MAX};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Experiment, ExperimentConfig};
use crate::link::{packet_rng, Link, Realization};
use crate::output::{list, num, opt, Table};

pub const PER_HEADER: &[&str] = &[
    "experiment",
    "snr_db",
    "estimator",
    "c",
    "n_tx",
    "n_rx",
    "n_itr",
    "info_bytes",
    "packets",
    "packet_errors",
    "per",
    "bit_errors",
    "ber",
    "mse_mean",
    "mi_demap_in",
    "mi_demap_out",
    "mi_decode_out",
    "p_diag_max_imag",
    "p_diag_min_real",
    "p_updates",
    "regularized",
    "skipped",
];

pub const EXIT_HEADER: &[&str] = &["experiment", "curve", "snr_db", "estimator", "iteration", "i_a", "i_e", "packets"];

pub const OPENLOOP_HEADER: &[&str] = &[
    "experiment",
    "snr_db",
    "n_tx",
    "n_rx",
    "sigma2",
    "n_d",
    "step",
    "mse",
    "eps_opt",
    "trials",
];

pub const CORR_HEADER: &[&str] = &["experiment", "snr_db", "estimator", "c", "matrix", "row", "col", "value", "pairs"];

pub const DIAG_HEADER: &[&str] = &[
    "experiment",
    "snr_db",
    "estimator",
    "packet",
    "n",
    "n_f",
    "n_d_mean",
    "trace_p_mean",
    "p_diag_max_imag",
    "p_diag_min_real",
    "regularized",
    "skipped",
];

/// Offset of the packet indices used by the EXIT transfer measurements.
const TRANSFER_STREAM: usize = 1 << 30;

#[derive(Debug, Clone)]
pub struct Report {
    pub results: Table,
    pub diag: Option<Table>,
    pub summary: serde_json::Value,
}

pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<Report> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    pool.install(|| match cfg.experiment {
        Experiment::PerSweep => per_sweep(cfg),
        Experiment::ExitChart => exit_chart(cfg),
        Experiment::MseOpenloop => mse_openloop(cfg),
        Experiment::CorrProbe => corr_probe(cfg),
    })
}

fn c_column(kind: EstimatorKind, c: f64) -> String {
    if kind == EstimatorKind::Proposed {
        num(c)
    } else {
        String::new()
    }
}

fn mi_values(acc: &[MiAccumulator]) -> Vec<Option<f64>> {
    acc.iter().map(MiAccumulator::value).collect()
}

/// Per-step estimator diagnostics aggregated over tones and antennas.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiag {
    pub n: usize,
    pub n_f: usize,
    pub n_d_mean: f64,
    pub trace_p_mean: f64,
    pub max_abs_imag: f64,
    pub min_real: f64,
    pub regularized: usize,
    pub skipped: usize,
}

fn step_diag(n: usize, reports: &[StepReport<f64>]) -> Option<StepDiag> {
    let first = reports.first()?;
    let cells = reports.len() as f64;
    let mut d = StepDiag {
        n,
        n_f: first.n_f,
        n_d_mean: reports.iter().map(|r| r.n_d as f64).sum::<f64>() / cells,
        trace_p_mean: reports.iter().map(|r| r.trace_p).sum::<f64>() / cells,
        max_abs_imag: f64::NAN,
        min_real: f64::NAN,
        regularized: reports.iter().filter(|r| r.regularized).count(),
        skipped: reports.iter().filter(|r| r.skipped).count(),
    };
    for c in reports.iter().filter_map(|r| r.diag) {
        d.max_abs_imag = if d.max_abs_imag.is_nan() { c.max_abs_imag } else { d.max_abs_imag.max(c.max_abs_imag) };
        d.min_real = if d.min_real.is_nan() { c.min_real } else { d.min_real.min(c.min_real) };
    }
    Some(d)
}

/// What one packet contributes to a PER point.
#[derive(Debug, Clone)]
pub struct PacketSummary {
    pub error: bool,
    pub bit_errors: usize,
    pub mse_mean: f64,
    pub mi: StageMi,
    pub diag: DiagSummary,
    pub steps: Vec<StepDiag>,
}

fn receive_summary(
    link: &Link,
    real: &Realization,
    kind: EstimatorKind,
    c: f64,
    form: GainForm,
    keep_steps: bool,
) -> idd_core::Result<PacketSummary> {
    let mut steps = Vec::new();
    let out = link.receive(real, kind, c, form, &mut |n, reports| {
        if keep_steps {
            steps.extend(step_diag(n, reports));
        }
    })?;
    let mse_mean = out.mse_trace.iter().sum::<f64>() / out.mse_trace.len().max(1) as f64;
    Ok(PacketSummary {
        error: out.packet_error,
        bit_errors: out.bit_errors,
        mse_mean,
        mi: out.mi,
        diag: out.diag,
        steps,
    })
}

/// Accumulated statistics of one estimator at one SNR point.
#[derive(Debug, Clone)]
pub struct Tally {
    pub kind: EstimatorKind,
    pub packets: usize,
    pub packet_errors: usize,
    pub bit_errors: usize,
    pub mse_sum: f64,
    pub mi: StageMi,
    pub diag: DiagSummary,
    /// Error flag of every counted packet, in packet order.
    pub errors: Vec<bool>,
    active: bool,
}

impl Tally {
    fn new(kind: EstimatorKind, n_itr: usize) -> Self {
        Self {
            kind,
            packets: 0,
            packet_errors: 0,
            bit_errors: 0,
            mse_sum: 0.0,
            mi: StageMi::new(n_itr),
            diag: DiagSummary::default(),
            errors: Vec::new(),
            active: true,
        }
    }

    fn absorb(&mut self, p: &PacketSummary) {
        self.packets += 1;
        self.packet_errors += p.error as usize;
        self.bit_errors += p.bit_errors;
        self.mse_sum += p.mse_mean;
        self.mi.merge(&p.mi);
        self.diag.merge(&p.diag);
        self.errors.push(p.error);
    }

    pub fn per(&self) -> f64 {
        self.packet_errors as f64 / self.packets.max(1) as f64
    }
}

/// Runs every estimator on the same packets of one SNR point. An estimator
/// stops counting once it reaches `max_errors` packet errors; the cut is
/// made in packet order so the result does not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn per_point(
    link: &Link,
    seed: u64,
    point: usize,
    snr_db: f64,
    kinds: &[EstimatorKind],
    c: f64,
    form: GainForm,
    packets: usize,
    max_errors: usize,
    mut diag: Option<&mut Table>,
) -> anyhow::Result<Vec<Tally>> {
    let mut tallies: Vec<Tally> = kinds.iter().map(|&k| Tally::new(k, link.cfg.n_itr)).collect();
    let chunk = (rayon::current_num_threads() * 4).max(8);
    let keep_steps = diag.is_some();
    let mut next = 0;
    while next < packets && tallies.iter().any(|t| t.active) {
        let end = (next + chunk).min(packets);
        let active: Vec<usize> = (0..kinds.len()).filter(|&i| tallies[i].active).collect();
        let batch: Vec<Vec<PacketSummary>> = (next..end)
            .into_par_iter()
            .map(|p| -> idd_core::Result<Vec<PacketSummary>> {
                let real = link.draw(snr_db, &mut packet_rng(seed, point, p))?;
                active
                    .iter()
                    .map(|&i| receive_summary(link, &real, kinds[i], c, form, keep_steps))
                    .collect()
            })
            .collect::<idd_core::Result<_>>()?;
        for (p, outs) in (next..end).zip(batch) {
            for (&i, out) in active.iter().zip(&outs) {
                let t = &mut tallies[i];
                if !t.active {
                    continue;
                }
                t.absorb(out);
                if let Some(table) = diag.as_deref_mut() {
                    for s in &out.steps {
                        table.push(vec![
                            "per-sweep".into(),
                            num(snr_db),
                            t.kind.name().into(),
                            p.to_string(),
                            s.n.to_string(),
                            s.n_f.to_string(),
                            num(s.n_d_mean),
                            num(s.trace_p_mean),
                            num(s.max_abs_imag),
                            num(s.min_real),
                            s.regularized.to_string(),
                            s.skipped.to_string(),
                        ]);
                    }
                }
                if t.packet_errors >= max_errors {
                    t.active = false;
                }
            }
        }
        next = end;
    }
    Ok(tallies)
}

fn per_sweep(cfg: &ExperimentConfig) -> anyhow::Result<Report> {
    let link = Link::new(&cfg.link, cfg.seed)?;
    let kinds = cfg.kinds()?;
    let (c, form) = (cfg.c(), cfg.gain_form()?);
    let mut table = Table::new(PER_HEADER);
    let mut diag = cfg.diag.then(|| Table::new(DIAG_HEADER));
    let bits = link.layout().total_info_bits();
    let mut summary = Vec::new();
    for (point, &snr) in cfg.sweep.snr_db.iter().enumerate() {
        let tallies = per_point(
            &link,
            cfg.seed,
            point,
            snr,
            &kinds,
            c,
            form,
            cfg.sweep.packets,
            cfg.sweep.max_errors,
            diag.as_mut(),
        )?;
        for t in &tallies {
            let kalman = t.diag.updates > 0;
            table.push(vec![
                "per-sweep".into(),
                num(snr),
                t.kind.name().into(),
                c_column(t.kind, c),
                cfg.link.n_tx.to_string(),
                cfg.link.n_rx.to_string(),
                cfg.link.n_itr.to_string(),
                cfg.link.info_bytes.to_string(),
                t.packets.to_string(),
                t.packet_errors.to_string(),
                num(t.per()),
                t.bit_errors.to_string(),
                num(t.bit_errors as f64 / (t.packets * bits).max(1) as f64),
                num(t.mse_sum / t.packets.max(1) as f64),
                list(&mi_values(&t.mi.demap_in)),
                list(&mi_values(&t.mi.demap_out)),
                list(&mi_values(&t.mi.decode_out)),
                if kalman { num(t.diag.max_abs_imag) } else { String::new() },
                if kalman { num(t.diag.min_real) } else { String::new() },
                t.diag.updates.to_string(),
                t.diag.regularized.to_string(),
                t.diag.skipped.to_string(),
            ]);
            summary.push(json!({"snr_db": snr, "estimator": t.kind.name(), "packets": t.packets, "per": t.per()}));
        }
    }
    Ok(Report {
        results: table,
        diag,
        summary: json!({ "points": summary }),
    })
}

fn exit_chart(cfg: &ExperimentConfig) -> anyhow::Result<Report> {
    let link = Link::new(&cfg.link, cfg.seed)?;
    let kinds = cfg.kinds()?;
    let (c, form) = (cfg.c(), cfg.gain_form()?);
    let mut table = Table::new(EXIT_HEADER);
    let mut summary = Vec::new();
    for (point, &snr) in cfg.exit.snr_db.iter().enumerate() {
        let outs: Vec<Vec<PacketSummary>> = (0..cfg.exit.packets)
            .into_par_iter()
            .map(|p| -> idd_core::Result<Vec<PacketSummary>> {
                let real = link.draw(snr, &mut packet_rng(cfg.seed, point, p))?;
                kinds.iter().map(|&k| receive_summary(&link, &real, k, c, form, false)).collect()
            })
            .collect::<idd_core::Result<_>>()?;
        for (i, &kind) in kinds.iter().enumerate() {
            let mut mi = StageMi::new(cfg.link.n_itr);
            let mut used = 0usize;
            for o in outs.iter().map(|o| &o[i]) {
                if !cfg.exit.good_only || !o.error {
                    mi.merge(&o.mi);
                    used += 1;
                }
            }
            for it in 0..cfg.link.n_itr {
                let (a1, e1, e2) = (mi.demap_in[it].value(), mi.demap_out[it].value(), mi.decode_out[it].value());
                for (curve, ia, ie) in [("demapper", a1, e1), ("decoder", e1, e2)] {
                    table.push(vec![
                        "exit-chart".into(),
                        curve.into(),
                        num(snr),
                        kind.name().into(),
                        (it + 1).to_string(),
                        opt(ia),
                        opt(ie),
                        used.to_string(),
                    ]);
                }
            }
            summary.push(json!({
                "snr_db": snr,
                "estimator": kind.name(),
                "packets_used": used,
                "demapper_out": mi_values(&mi.demap_out),
            }));
        }
        if cfg.exit.transfer_points > 0 {
            transfer_curves(cfg, &link, point, snr, &mut table)?;
        }
    }
    Ok(Report {
        results: table,
        diag: None,
        summary: json!({ "trajectories": summary }),
    })
}

/// Demapper (perfect CSI) and decoder transfer curves measured with
/// consistent Gaussian a-priori LLRs.
fn transfer_curves(cfg: &ExperimentConfig, link: &Link, point: usize, snr: f64, table: &mut Table) -> anyhow::Result<()> {
    let rx = &link.receiver;
    let layout = link.layout();
    let per_packet = layout.capacity() * layout.n_sym;
    let packets = cfg.exit.transfer_bits.div_ceil(per_packet).max(1);
    let points = cfg.exit.transfer_points;
    let width = layout.bits_per_symbol * layout.n_tx;
    for q in 0..points {
        let nominal = if points == 1 { 0.0 } else { 0.999 * q as f64 / (points - 1) as f64 };
        let sigma = j_inverse(nominal);
        let parts: Vec<[MiAccumulator; 4]> = (0..packets)
            .into_par_iter()
            .map(|p| -> idd_core::Result<[MiAccumulator; 4]> {
                // Every point sees the same realizations; priors use their own stream.
                let real = link.draw(snr, &mut packet_rng(cfg.seed, point, TRANSFER_STREAM + p))?;
                let mut rng = packet_rng(cfg.seed, point, TRANSFER_STREAM + (q + 1) * packets + p);
                let est = link.estimator(&real, EstimatorKind::Perfect, 0.0, GainForm::default())?;
                let mut acc = [MiAccumulator::default(); 4];
                for j in 0..layout.n_sym {
                    let bits = &real.packet.frame_bits[j];
                    let filler = rx.filler(j);
                    let mut draw = |acc_in: &mut MiAccumulator| {
                        let data: Vec<f64> = bits
                            .iter()
                            .zip(filler)
                            .map(|(&b, &f)| {
                                if f {
                                    -L_MAX
                                } else {
                                    let l = gaussian_llr(b, sigma, &mut rng);
                                    acc_in.push(l, b);
                                    l
                                }
                            })
                            .collect();
                        LlrFrame::from_vec(layout.n_sc, width, data)
                    };
                    let prior = draw(&mut acc[0])?;
                    let ext = rx.demap(j, &prior, &est, &real.received)?;
                    let dec_in = draw(&mut acc[2])?;
                    let (dec, _) = rx.decode(j, &dec_in)?;
                    for (i, &b) in bits.iter().enumerate() {
                        if !filler[i] {
                            acc[1].push(ext.data[i], b);
                            acc[3].push(dec.data[i], b);
                        }
                    }
                }
                Ok(acc)
            })
            .collect::<idd_core::Result<_>>()?;
        let mut tot = [MiAccumulator::default(); 4];
        for part in &parts {
            for (t, a) in tot.iter_mut().zip(part) {
                t.merge(a);
            }
        }
        for (curve, ia, ie) in [("demapper_transfer", tot[0], tot[1]), ("decoder_transfer", tot[2], tot[3])] {
            table.push(vec![
                "exit-chart".into(),
                curve.into(),
                num(snr),
                EstimatorKind::Perfect.name().into(),
                q.to_string(),
                opt(ia.value()),
                opt(ie.value()),
                packets.to_string(),
            ]);
        }
    }
    Ok(())
}

fn mse_openloop(cfg: &ExperimentConfig) -> anyhow::Result<Report> {
    let ol = &cfg.openloop;
    let (n_t, n_r) = (cfg.link.n_tx, cfg.link.n_rx);
    let modulation = idd_core::ModulationConfig::<f64>::qam(cfg.link.modulation)?;
    let es = modulation.symbol_energy();
    let cases: Vec<(usize, f64, f64, usize)> = ol
        .snr_db
        .iter()
        .enumerate()
        .flat_map(|(pi, &snr)| {
            ol.sigma2
                .iter()
                .flat_map(move |&s2| ol.n_d.iter().map(move |&nd| (pi, snr, s2, nd)))
        })
        .collect();
    let traces: Vec<Vec<f64>> = cases
        .par_iter()
        .enumerate()
        .map(|(i, &(pi, snr, s2, nd))| {
            let run = OpenLoopConfig {
                n_t,
                n_r,
                n_d: nd,
                sigma2: s2,
                snr_db: snr,
                steps: ol.steps,
                trials: ol.trials,
            };
            open_loop_mse(&run, &modulation, &mut packet_rng(cfg.seed, pi, i))
        })
        .collect::<idd_core::Result<_>>()?;
    let mut table = Table::new(OPENLOOP_HEADER);
    let mut summary = Vec::new();
    for (&(_, snr, s2, nd), trace) in cases.iter().zip(&traces) {
        let n0 = idd_core::snr_to_n0(snr, n_t, es);
        // E|h|² = 1 per link, so the matched per-row weight is N₀ + N_t·σ².
        let v = vec![n0 + n_t as f64 * s2; n_r];
        let eps = eps_opt(nd as f64, es, s2, &v, &vec![vec![1.0; n_t]; n_r])?;
        for (step, &m) in trace.iter().enumerate() {
            table.push(vec![
                "mse-openloop".into(),
                num(snr),
                n_t.to_string(),
                n_r.to_string(),
                num(s2),
                nd.to_string(),
                step.to_string(),
                num(m),
                num(eps),
                ol.trials.to_string(),
            ]);
        }
        summary.push(json!({
            "snr_db": snr,
            "sigma2": s2,
            "n_d": nd,
            "steady_state": idd_core::analysis::steady_state(trace),
            "eps_opt": eps,
        }));
    }
    Ok(Report {
        results: table,
        diag: None,
        summary: json!({ "cases": summary }),
    })
}

/// Lag-2 residual statistics of the punctured estimator.
///
/// Entry `(a, b)` pairs the stage-`a+2` residual at step `n−2` with the
/// stage-`b+2` residual at step `n` on the same `(tone, antenna)`. The
/// post-puncture statistics zero the rows the estimator dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrStats {
    pub dim: usize,
    pub sum: [Vec<Cx<f64>>; 2],
    pub count: Vec<u64>,
    /// Power of the newest (stage 2) row, for normalisation.
    pub lead_power: [f64; 2],
    pub lead_count: u64,
    /// Same-symbol pairs indexed by the newer stage: cross sum and powers.
    pub aligned: [Vec<(Cx<f64>, f64, f64)>; 2],
    pub aligned_count: Vec<u64>,
}

impl CorrStats {
    pub fn new(n_itr: usize) -> Self {
        let dim = (2 * n_itr).saturating_sub(2);
        Self {
            dim,
            sum: [vec![Cx::new(0.0, 0.0); dim * dim], vec![Cx::new(0.0, 0.0); dim * dim]],
            count: vec![0; dim * dim],
            lead_power: [0.0; 2],
            lead_count: 0,
            aligned: [vec![(Cx::new(0.0, 0.0), 0.0, 0.0); dim], vec![(Cx::new(0.0, 0.0), 0.0, 0.0); dim]],
            aligned_count: vec![0; dim],
        }
    }

    fn residuals(r: &StepReport<f64>) -> Vec<(Tag, Cx<f64>, Cx<f64>)> {
        let zero = Cx::new(0.0, 0.0);
        let mut post = vec![zero; r.x.len()];
        for &i in &r.kept {
            post[i] = r.x[i].1;
        }
        r.x.iter().zip(post).map(|(&(tag, x), y)| (tag, x, y)).collect()
    }

    /// Adds one `(tone, antenna)` cell: reports at `n−2` and `n`.
    pub fn add(&mut self, prev: &StepReport<f64>, now: &StepReport<f64>) {
        let (p, q) = (Self::residuals(prev), Self::residuals(now));
        let d = self.dim;
        for &(tb, xb, yb) in &q {
            let b = tb.stage - 2;
            if tb.stage == 2 {
                self.lead_power[0] += xb.norm_sqr();
                self.lead_power[1] += yb.norm_sqr();
                self.lead_count += 1;
            }
            for &(ta, xa, ya) in &p {
                let a = ta.stage - 2;
                self.sum[0][a * d + b] += xa * xb.conj();
                self.sum[1][a * d + b] += ya * yb.conj();
                self.count[a * d + b] += 1;
                if ta.symbol == tb.symbol && ta.stage + 2 == tb.stage {
                    for (acc, (u, v)) in self.aligned.iter_mut().zip([(xa, xb), (ya, yb)]) {
                        let e = &mut acc[b];
                        e.0 += u * v.conj();
                        e.1 += u.norm_sqr();
                        e.2 += v.norm_sqr();
                    }
                    self.aligned_count[b] += 1;
                }
            }
        }
    }

    pub fn merge(&mut self, o: &Self) {
        for m in 0..2 {
            for (a, b) in self.sum[m].iter_mut().zip(&o.sum[m]) {
                *a += b;
            }
            for (a, b) in self.aligned[m].iter_mut().zip(&o.aligned[m]) {
                a.0 += b.0;
                a.1 += b.1;
                a.2 += b.2;
            }
            self.lead_power[m] += o.lead_power[m];
        }
        for (a, b) in self.count.iter_mut().zip(&o.count) {
            *a += b;
        }
        for (a, b) in self.aligned_count.iter_mut().zip(&o.aligned_count) {
            *a += b;
        }
        self.lead_count += o.lead_count;
    }

    /// `|E[u_{n−2}[a] u_n*[b]]|` normalised by the mean stage-2 power;
    /// `which` is 0 before and 1 after puncturing.
    pub fn matrix(&self, which: usize) -> Vec<Option<f64>> {
        let norm = self.lead_power[which] / self.lead_count.max(1) as f64;
        self.sum[which]
            .iter()
            .zip(&self.count)
            .map(|(s, &c)| (c > 0 && norm > 0.0).then(|| s.norm() / c as f64 / norm))
            .collect()
    }

    /// Variance-normalised same-symbol correlation per newer stage index.
    pub fn aligned(&self, which: usize) -> Vec<Option<f64>> {
        self.aligned[which]
            .iter()
            .map(|&(c, pa, pb)| (pa > 0.0 && pb > 0.0).then(|| c.norm() / (pa * pb).sqrt()))
            .collect()
    }

    /// Mean of [`CorrStats::aligned`] over stages where the pre-puncture
    /// statistic exists.
    pub fn aligned_mean(&self, which: usize) -> f64 {
        let pre = self.aligned(0);
        let vals: Vec<f64> = self
            .aligned(which)
            .iter()
            .zip(&pre)
            .filter(|(_, p)| p.is_some())
            .map(|(v, _)| v.unwrap_or(0.0))
            .collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    }
}

/// Correlation statistics of one packet through the proposed estimator.
pub fn corr_packet(link: &Link, real: &Realization, c: f64, form: GainForm) -> idd_core::Result<(bool, CorrStats)> {
    let mut stats = CorrStats::new(link.cfg.n_itr);
    let mut hist: Vec<Vec<StepReport<f64>>> = Vec::new();
    let out = link.receive(real, EstimatorKind::Proposed, c, form, &mut |_, reports| {
        if hist.len() >= 2 {
            for (p, q) in hist[hist.len() - 2].iter().zip(reports) {
                stats.add(p, q);
            }
        }
        hist.push(reports.to_vec());
    })?;
    Ok((out.packet_error, stats))
}

/// Scans packets in order until `wanted` erroneous ones are found or
/// `max_packets` are drawn. Returns the pooled statistics, the number of
/// erroneous packets used and the number drawn.
#[allow(clippy::too_many_arguments)]
pub fn corr_point(
    link: &Link,
    seed: u64,
    point: usize,
    snr_db: f64,
    c: f64,
    form: GainForm,
    wanted: usize,
    max_packets: usize,
) -> anyhow::Result<(CorrStats, usize, usize)> {
    let mut total = CorrStats::new(link.cfg.n_itr);
    let (mut found, mut drawn) = (0, 0);
    let chunk = (rayon::current_num_threads() * 2).max(4);
    while found < wanted && drawn < max_packets {
        let end = (drawn + chunk).min(max_packets);
        let batch: Vec<(bool, CorrStats)> = (drawn..end)
            .into_par_iter()
            .map(|p| {
                let real = link.draw(snr_db, &mut packet_rng(seed, point, p))?;
                corr_packet(link, &real, c, form)
            })
            .collect::<idd_core::Result<_>>()?;
        for (error, stats) in batch {
            drawn += 1;
            if error {
                total.merge(&stats);
                found += 1;
                if found == wanted {
                    break;
                }
            }
        }
    }
    Ok((total, found, drawn))
}

fn corr_probe(cfg: &ExperimentConfig) -> anyhow::Result<Report> {
    let link = Link::new(&cfg.link, cfg.seed)?;
    let (c, form) = (cfg.c(), cfg.gain_form()?);
    let mut table = Table::new(CORR_HEADER);
    let mut summary = Vec::new();
    for (point, &snr) in cfg.corr.snr_db.iter().enumerate() {
        let (stats, found, drawn) = corr_point(
            &link,
            cfg.seed,
            point,
            snr,
            c,
            form,
            cfg.corr.erroneous_packets,
            cfg.corr.max_packets,
        )?;
        let d = stats.dim;
        let row = |matrix: &str, r: String, col: String, v: Option<f64>, pairs: u64| {
            vec![
                "corr-probe".into(),
                num(snr),
                EstimatorKind::Proposed.name().into(),
                num(c),
                matrix.into(),
                r,
                col,
                opt(v),
                pairs.to_string(),
            ]
        };
        for (which, name) in [(0, "pre"), (1, "post")] {
            for (i, v) in stats.matrix(which).into_iter().enumerate() {
                table.push(row(name, (i / d).to_string(), (i % d).to_string(), v, stats.count[i]));
            }
        }
        for (which, name) in [(0, "pre_aligned"), (1, "post_aligned")] {
            for (b, v) in stats.aligned(which).into_iter().enumerate().skip(2) {
                table.push(row(name, (b - 2).to_string(), b.to_string(), v, stats.aligned_count[b]));
            }
        }
        let (pre, post) = (stats.aligned_mean(0), stats.aligned_mean(1));
        for (name, v) in [("pre_mean", pre), ("post_mean", post)] {
            table.push(row(name, String::new(), String::new(), Some(v), found as u64));
        }
        summary.push(json!({
            "snr_db": snr,
            "erroneous_packets": found,
            "packets_drawn": drawn,
            "pre_mean": pre,
            "post_mean": post,
        }));
    }
    Ok(Report {
        results: table,
        diag: None,
        summary: json!({ "points": summary }),
    })
}
