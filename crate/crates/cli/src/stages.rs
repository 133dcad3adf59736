//! Pipeline stages. Each reads declared artifacts from the run directory
//! (hash-checked) and writes its own; datasets are regenerated from the
//! recorded configuration.

use std::collections::BTreeMap;
use std::time::Instant;

use naf_core::attack::{random_probes, random_scales};
use naf_core::coding::generate_best_codebook;
use naf_core::nn::{model_from_bytes, model_to_bytes};
use naf_core::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::*;
use crate::config::{derive_seed, AttackConfig, ExperimentConfig};
use crate::error::{CliError, CliResult};

/// Probe inputs per attack trial for the functional-drift measurement.
const DRIFT_PROBES: usize = 1000;
const DRIFT_PROBE_SCALE: f32 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub optimizer: String,
    pub host_initial_loss: f64,
    pub host_final_loss: f64,
    pub host_train_accuracy: f64,
    pub host_test_accuracy: f64,
    pub marked_test_accuracy: f64,
    pub embed_ber: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeSummary {
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub k_corrupted: usize,
    /// Correctable positions allowed by the capacity bound.
    pub t_corrupted: usize,
    pub d_min_target: usize,
    /// Minimum distance the generated codebook actually achieved.
    pub d_min: usize,
    /// Errors per neuron the codebook is guaranteed to correct.
    pub radius: usize,
    pub centroids: Vec<f32>,
    pub boundaries: Vec<f32>,
    pub normalized_reference: bool,
    pub codebook_sha256: String,
}

/// Outcome of one verification of one suspect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeOutcome {
    pub accepted: bool,
    pub ber: f64,
    pub accuracy: Option<f64>,
    pub live_accuracy: Option<f64>,
    pub collisions_resolved: usize,
    pub total_distance: usize,
    pub dead_neurons: usize,
    pub tamper: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub functional_drift: f64,
    pub task_accuracy: Option<f64>,
    /// Verification of the suspect as found, without alignment.
    pub unaligned: ModeOutcome,
    pub aligned: BTreeMap<TriggerMode, ModeOutcome>,
}

pub(crate) struct Datasets {
    pub train: Dataset,
    pub test: Dataset,
}

pub(crate) fn datasets(cfg: &ExperimentConfig) -> CliResult<Datasets> {
    let all = cfg.blob_spec().generate()?;
    let (train, test) = all.split_at(cfg.data.train_samples);
    Ok(Datasets { train, test })
}

fn timed<T>(run: &RunDir, stage: &str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
    let start = Instant::now();
    let out = f()?;
    run.record_timing(stage, start.elapsed().as_secs_f64())?;
    Ok(out)
}

fn backend(cfg: &ExperimentConfig) -> UchidaBackend {
    UchidaBackend {
        strength: cfg.watermark.strength,
        ..UchidaBackend::default()
    }
}

/// Configuration the run directory was created with.
pub fn recorded_config(run: &RunDir) -> CliResult<ExperimentConfig> {
    let text = String::from_utf8(run.read(CONFIG)?)
        .map_err(|_| CliError::Integrity(format!("{CONFIG} is not UTF-8")))?;
    ExperimentConfig::from_toml(&text)
}

pub fn load_model_artifact(run: &RunDir, name: &str) -> CliResult<Network> {
    Ok(model_from_bytes(&run.read(name)?)?)
}

pub fn load_record(run: &RunDir) -> CliResult<WatermarkRecord> {
    Ok(WatermarkRecord::from_bytes(&run.read(RECORD)?)?)
}

pub fn load_codebook(run: &RunDir) -> CliResult<Codebook> {
    Ok(Codebook::from_bytes(&run.read(CODEBOOK)?)?)
}

pub fn load_centroids(run: &RunDir) -> CliResult<CentroidSet> {
    Ok(CentroidSet::from_bytes(&run.read(CENTROIDS)?)?)
}

pub fn load_triggers(run: &RunDir, mode: TriggerMode) -> CliResult<TriggerSet> {
    Ok(TriggerSet::from_bytes(&run.read(&triggers_file(mode))?)?)
}

/// The network triggers are forged against: the watermarked model, or its
/// layer-normalized copy when normalization is on.
fn reference(cfg: &ExperimentConfig, marked: &Network) -> CliResult<Network> {
    if cfg.normalize {
        Ok(normalize_layer(marked, &cfg.watermark.layer)?)
    } else {
        Ok(marked.clone())
    }
}

/// Trains the host, embeds the watermark and records the configuration.
pub fn train_stage(cfg: &ExperimentConfig, run: &RunDir) -> CliResult<TrainSummary> {
    cfg.validate()?;
    timed(run, "train", || {
        let data = datasets(cfg)?;
        let net = Network::mlp(
            cfg.data.input_dim,
            &cfg.model.hidden,
            cfg.data.classes,
            derive_seed(cfg.seed, "init"),
        )?;
        let host = train(&net, &data.train, &cfg.train_config(cfg.model.epochs, "train"), None)?;
        let w = &cfg.watermark;
        let record = WatermarkRecord::generate(
            &host.network,
            &w.layer,
            w.bits,
            w.threshold,
            derive_seed(cfg.seed, "watermark"),
        )?;
        let backend = backend(cfg);
        let marked = backend.embed(&host.network, &record, &data.train, &cfg.train_config(w.embed_epochs, "embed"))?;
        let summary = TrainSummary {
            optimizer: "sgd".into(),
            host_initial_loss: host.initial_loss,
            host_final_loss: host.final_loss,
            host_train_accuracy: host.network.accuracy(&data.train)?,
            host_test_accuracy: host.network.accuracy(&data.test)?,
            marked_test_accuracy: marked.accuracy(&data.test)?,
            embed_ber: backend.verify(&marked, &record)?.ber,
        };
        run.reset()?;
        run.write_many(&[
            (CONFIG.into(), cfg.to_toml().into_bytes()),
            (MODEL.into(), model_to_bytes(&marked)?),
            (RECORD.into(), record.to_bytes()),
            (TRAIN_SUMMARY.into(), json_bytes(&summary)?),
        ])?;
        Ok(summary)
    })
}

/// Centroids of the watermarked layer and the neuron codebook.
pub fn encode_stage(run: &RunDir) -> CliResult<EncodeSummary> {
    let cfg = recorded_config(run)?;
    timed(run, "encode", || {
        let marked = load_model_artifact(run, MODEL)?;
        let reference = reference(&cfg, &marked)?;
        let data = datasets(&cfg)?;
        let idx = reference.layer_index(&cfg.watermark.layer)?;
        let outputs = reference.layer_output(&data.train.inputs, idx)?;
        let c = &cfg.coding;
        let cs = compute_centroids(&outputs, c.k)?;
        let n = cfg.layer_width();
        let t_corrupted = max_correctable(n, c.t, c.k, c.k_corrupted);
        let d_min_target = 2 * t_corrupted + 1;
        let cb = generate_best_codebook(n, c.t, c.k, d_min_target, derive_seed(cfg.seed, "codebook")).map_err(|e| {
            CliError::validation(format!(
                "coding: {e}; {n} distinct codewords of length {} over {} symbols do not exist — raise coding.t or coding.k",
                c.t, c.k
            ))
        })?;
        let summary = EncodeSummary {
            n,
            t: c.t,
            k: c.k,
            k_corrupted: c.k_corrupted,
            t_corrupted,
            d_min_target,
            d_min: cb.d_min(),
            radius: cb.radius(),
            centroids: cs.centroids.clone(),
            boundaries: cs.boundaries.clone(),
            normalized_reference: cfg.normalize,
            codebook_sha256: hex::encode(cb.hash()),
        };
        run.write_many(&[
            (CODEBOOK.into(), cb.to_bytes()),
            (CENTROIDS.into(), cs.to_bytes()),
            (ENCODE_SUMMARY.into(), json_bytes(&summary)?),
        ])?;
        Ok(summary)
    })
}

/// Synthesizes one trigger set per requested mode.
pub fn forge_stage(run: &RunDir, modes: &[TriggerMode]) -> CliResult<Vec<TriggerSet>> {
    let cfg = recorded_config(run)?;
    timed(run, "forge", || {
        let marked = load_model_artifact(run, MODEL)?;
        let reference = reference(&cfg, &marked)?;
        let cb = load_codebook(run)?;
        let cs = load_centroids(run)?;
        let data = datasets(&cfg)?;
        let layer = &cfg.watermark.layer;
        let f = &cfg.forge;
        let options = |mode: TriggerMode| ForgeOptions {
            steps: f.steps,
            lr: f.lr,
            init_seed: derive_seed(cfg.seed, &format!("forge/{mode}")),
            clamp_box: data.train.bounding_box(),
        };
        let mut sets = Vec::new();
        for &mode in modes {
            let mut set = match mode {
                TriggerMode::N => {
                    let rows: Vec<usize> = (0..cb.t()).collect();
                    sample_trigger_set(&reference, layer, &data.train.inputs.select_rows(&rows), &cs, &cb)?
                }
                TriggerMode::T1 => {
                    synthesize_trigger_set(&VariantEnsemble::original_only(&reference), layer, &cs, &cb, &options(mode))?
                }
                TriggerMode::T2 => {
                    let mut ensemble = make_variant_ensemble(
                        &marked,
                        &data.train,
                        layer,
                        f.j,
                        f.finetune_lr,
                        derive_seed(cfg.seed, "variants"),
                    )?;
                    if cfg.normalize {
                        for net in ensemble.networks.iter_mut() {
                            *net = normalize_layer(net, layer)?;
                        }
                    }
                    synthesize_trigger_set(&ensemble, layer, &cs, &cb, &options(mode))?
                }
            };
            set.normalized = cfg.normalize;
            run.write(&triggers_file(mode), &set.to_bytes())?;
            sets.push(set);
        }
        Ok(sets)
    })
}

/// One attacked copy of the watermarked model.
fn attack_once(
    cfg: &ExperimentConfig,
    marked: &Network,
    data: &Datasets,
    attack: &AttackConfig,
    trial: usize,
    probes: &Matrix,
) -> CliResult<(Network, AttackReport)> {
    let label = attack.label();
    let layer = &cfg.watermark.layer;
    let width = cfg.layer_width();
    let seed = derive_seed(cfg.seed, &format!("attack/{label}/{trial}"));
    let perm = random_permutation(layer, width, derive_seed(seed, "perm"));
    let mut params = BTreeMap::new();
    let suspect = match *attack {
        AttackConfig::Np { .. } => permute_neurons(marked, &perm)?,
        AttackConfig::Ftp { epochs, lr, .. } => {
            params.insert("epochs".into(), epochs as f64);
            params.insert("lr".into(), lr);
            attack_ftp(marked, &data.train, epochs, lr, &perm, seed)?
        }
        AttackConfig::Npp { fraction, .. } => {
            params.insert("fraction".into(), fraction);
            attack_npp(marked, fraction, &perm, seed)?
        }
        AttackConfig::Rescale { lo, hi, .. } => {
            params.insert("lo".into(), lo);
            params.insert("hi".into(), hi);
            let scaled = attack_rescale(marked, layer, &random_scales(width, lo, hi, seed), seed)?;
            permute_neurons(&scaled, &perm)?
        }
    };
    let report = AttackReport {
        kind: attack.kind(),
        permutation: perm,
        params,
        functional_drift: functional_drift(marked, &suspect, probes)?,
        task_accuracy: Some(suspect.accuracy(&data.test)?),
        seed,
    };
    Ok((suspect, report))
}

/// Runs every configured attack (or only `only`) for its trial count, or
/// `trials` when given, writing the attacked models and their ground truth.
pub fn attack_stage(run: &RunDir, only: Option<AttackKind>, trials: Option<usize>) -> CliResult<Vec<String>> {
    let cfg = recorded_config(run)?;
    timed(run, "attack", || {
        let marked = load_model_artifact(run, MODEL)?;
        let data = datasets(&cfg)?;
        let probes = random_probes(cfg.data.input_dim, DRIFT_PROBES, DRIFT_PROBE_SCALE, derive_seed(cfg.seed, "probes"));
        let mut labels = Vec::new();
        for attack in selected_attacks(&cfg, only, trials) {
            let label = attack.label();
            let results = (0..attack.trials())
                .into_par_iter()
                .map(|trial| attack_once(&cfg, &marked, &data, &attack, trial, &probes))
                .collect::<CliResult<Vec<_>>>()?;
            let mut items = Vec::with_capacity(results.len() + 1);
            let mut truth = Vec::with_capacity(results.len());
            for (trial, (net, report)) in results.into_iter().enumerate() {
                items.push((attack_model(&label, trial), model_to_bytes(&net)?));
                truth.push(report);
            }
            items.push((attack_truth(&label), json_bytes(&truth)?));
            run.write_many(&items)?;
            labels.push(label);
        }
        Ok(labels)
    })
}

pub(crate) fn selected_attacks(cfg: &ExperimentConfig, only: Option<AttackKind>, trials: Option<usize>) -> Vec<AttackConfig> {
    cfg.attacks
        .iter()
        .filter(|a| only.is_none_or(|k| a.kind() == k))
        .cloned()
        .map(|mut a| {
            if let Some(n) = trials {
                a.set_trials(n);
            }
            a
        })
        .collect()
}

fn unaligned_outcome(backend: &UchidaBackend, suspect: &Network, record: &WatermarkRecord) -> CliResult<ModeOutcome> {
    let (ov, tamper) = match backend.verify(suspect, record) {
        Ok(ov) => (ov, None),
        Err(NafError::Tamper(cause)) => (
            OVResult {
                accepted: false,
                ber: 1.0,
                bits_extracted: Vec::new(),
            },
            Some(cause),
        ),
        Err(e) => return Err(e.into()),
    };
    Ok(ModeOutcome {
        accepted: ov.accepted,
        ber: ov.ber,
        accuracy: None,
        live_accuracy: None,
        collisions_resolved: 0,
        total_distance: 0,
        dead_neurons: 0,
        tamper,
    })
}

/// Aligns one suspect with one trigger set and verifies the result.
pub fn aligned_outcome(
    backend: &UchidaBackend,
    suspect: &Network,
    triggers: &TriggerSet,
    cb: &Codebook,
    record: &WatermarkRecord,
    normalize: bool,
    truth: Option<&PermutationSpec>,
) -> CliResult<(ModeOutcome, Option<AlignmentResult>)> {
    let v = verify_with_alignment(suspect, triggers, cb, backend, record, AlignOptions { normalize })?;
    let mut alignment = v.alignment;
    if let (Some(a), Some(t)) = (alignment.as_mut(), truth) {
        a.score(t);
    }
    let outcome = ModeOutcome {
        accepted: v.ov.accepted,
        ber: v.ov.ber,
        accuracy: alignment.as_ref().and_then(|a| a.accuracy),
        live_accuracy: alignment.as_ref().and_then(|a| a.live_accuracy),
        collisions_resolved: alignment.as_ref().map_or(0, |a| a.collisions_resolved),
        total_distance: alignment.as_ref().map_or(0, |a| a.total_distance),
        dead_neurons: alignment.as_ref().map_or(0, |a| a.dead_neurons.len()),
        tamper: v.tamper,
    };
    Ok((outcome, alignment))
}

/// Trigger modes whose sets exist in the run directory, optionally narrowed.
pub(crate) fn available_modes(run: &RunDir, only: Option<TriggerMode>) -> CliResult<Vec<TriggerMode>> {
    let mut modes = Vec::new();
    for mode in [TriggerMode::N, TriggerMode::T1, TriggerMode::T2] {
        if only.is_none_or(|m| m == mode) && run.has(&triggers_file(mode))? {
            modes.push(mode);
        }
    }
    if let Some(m) = only {
        if modes.is_empty() {
            return Err(CliError::Integrity(format!("no {m} trigger set in the run; run `naf forge --mode {m}` first")));
        }
    }
    Ok(modes)
}

/// Verifies every attacked model without and with alignment.
pub fn align_stage(run: &RunDir, only: Option<TriggerMode>, normalize: bool) -> CliResult<Vec<String>> {
    let cfg = recorded_config(run)?;
    timed(run, "align", || {
        let record = load_record(run)?;
        let cb = load_codebook(run)?;
        let backend = backend(&cfg);
        let sets: Vec<(TriggerMode, TriggerSet)> = available_modes(run, only)?
            .into_iter()
            .map(|m| load_triggers(run, m).map(|s| (m, s)))
            .collect::<CliResult<_>>()?;
        let normalize = normalize || cfg.normalize;
        let mut labels = Vec::new();
        for attack in &cfg.attacks {
            let label = attack.label();
            if !run.has(&attack_truth(&label))? {
                continue;
            }
            let truth: Vec<AttackReport> = run.read_json(&attack_truth(&label))?;
            let outcomes = truth
                .par_iter()
                .enumerate()
                .map(|(trial, report)| {
                    let suspect = load_model_artifact(run, &attack_model(&label, trial))?;
                    let mut aligned = BTreeMap::new();
                    for (mode, set) in &sets {
                        let (o, _) =
                            aligned_outcome(&backend, &suspect, set, &cb, &record, normalize, Some(&report.permutation))?;
                        aligned.insert(*mode, o);
                    }
                    Ok(TrialOutcome {
                        trial,
                        functional_drift: report.functional_drift,
                        task_accuracy: report.task_accuracy,
                        unaligned: unaligned_outcome(&backend, &suspect, &record)?,
                        aligned,
                    })
                })
                .collect::<CliResult<Vec<_>>>()?;
            run.write_json(&trials_file(&label), &outcomes)?;
            labels.push(label);
        }
        Ok(labels)
    })
}
