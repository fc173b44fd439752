//! Quality scoring and the per-speaker drop rule.
//!
//! Records are ranked within each speaker by a composite of z-scored
//! metrics, oriented so that higher means worse: negated SNR, speaking
//! rate, negated articulation. Records without finite metrics cannot be
//! ranked and are dropped before any scored record.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::audio::{measure_quality, wav_read, QualityMetrics, StftConfig};
use crate::textfront::{tokenize, Lexicon, SymbolInventory};

use super::{CorpusManifest, DataError, UtteranceRecord};

/// Output of [`score_corpus`]: the manifest with metrics attached and one
/// warning line per record that could not be scored.
#[derive(Debug, Clone)]
pub struct ScoredCorpus {
    pub manifest: CorpusManifest,
    pub warnings: Vec<String>,
}

fn score_one(
    manifest: &CorpusManifest,
    record: &UtteranceRecord,
    inventory: &SymbolInventory,
    lexicon: Option<&Lexicon>,
    cfg: &StftConfig,
) -> Result<QualityMetrics, String> {
    let wav = wav_read(&manifest.resolve_audio(record), cfg.sample_rate)
        .map_err(|e| e.to_string())?;
    let seq = tokenize(&record.text, inventory, lexicon).map_err(|e| e.to_string())?;
    measure_quality(&wav, &seq, cfg).map_err(|e| e.to_string())
}

/// Attach quality metrics to every record, in parallel.
///
/// Per-record failures (unreadable audio, untokenizable text, too-short
/// clips) and the silent-audio SNR sentinel do not abort the run: the
/// record keeps `metrics: None`, marking it unscorable, and contributes a
/// warning line. Output order matches input order regardless of thread
/// scheduling.
pub fn score_corpus(
    manifest: &CorpusManifest,
    inventory: &SymbolInventory,
    lexicon: Option<&Lexicon>,
    cfg: &StftConfig,
) -> ScoredCorpus {
    let scored: Vec<(UtteranceRecord, Option<String>)> = manifest
        .records
        .par_iter()
        .map(|record| {
            let mut record = record.clone();
            let warning = match score_one(manifest, &record, inventory, lexicon, cfg) {
                Ok(metrics) if metrics.is_finite() => {
                    record.metrics = Some(metrics);
                    None
                }
                Ok(_) => {
                    record.metrics = None;
                    Some(format!(
                        "{}: unscorable, SNR sentinel fired on silent audio",
                        record.id
                    ))
                }
                Err(msg) => {
                    record.metrics = None;
                    Some(format!("{}: unscorable, {msg}", record.id))
                }
            };
            (record, warning)
        })
        .collect();

    let mut records = Vec::with_capacity(scored.len());
    let mut warnings = Vec::new();
    for (record, warning) in scored {
        records.push(record);
        warnings.extend(warning);
    }
    ScoredCorpus {
        manifest: CorpusManifest {
            records,
            root: manifest.root.clone(),
            provenance: manifest.provenance,
        },
        warnings,
    }
}

/// Population z-scores of one metric series; a constant series (zero
/// standard deviation) contributes zeros, affecting no ranks.
fn z_scores(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

/// Composite badness per record of one group: the mean of the three
/// oriented z-scores, or `None` for unscorable records.
fn composites(metrics: &[Option<QualityMetrics>]) -> Vec<Option<f64>> {
    let scored: Vec<usize> = (0..metrics.len()).filter(|&i| metrics[i].is_some()).collect();
    let series = |f: fn(&QualityMetrics) -> f64| -> Vec<f64> {
        scored
            .iter()
            .map(|&i| f(metrics[i].as_ref().unwrap()))
            .collect()
    };
    let z_snr = z_scores(&series(|m| -m.snr_db));
    let z_rate = z_scores(&series(|m| m.speaking_rate));
    let z_artic = z_scores(&series(|m| -m.articulation));

    let mut out = vec![None; metrics.len()];
    for (k, &i) in scored.iter().enumerate() {
        out[i] = Some((z_snr[k] + z_rate[k] + z_artic[k]) / 3.0);
    }
    out
}

/// Worst-first drop order among positions `0..n`: unscorable records come
/// first, then descending composite; equal keys drop the higher id, so the
/// lower id survives a tie at the cut.
fn drop_order(composites: &[Option<f64>], ids: &[&str]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..composites.len()).collect();
    order.sort_by(|&a, &b| match (composites[a], composites[b]) {
        (None, None) => ids[b].cmp(ids[a]),
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(ca), Some(cb)) => cb
            .partial_cmp(&ca)
            .unwrap()
            .then_with(|| ids[b].cmp(ids[a])),
    });
    order
}

/// Mark the worst `ceil(drop_fraction * n)` records of every speaker as
/// dropped, never exceeding `n - 1` so no speaker disappears. Every record
/// in the result carries an explicit `kept` flag.
pub fn filter_corpus(
    manifest: &CorpusManifest,
    drop_fraction: f64,
) -> Result<CorpusManifest, DataError> {
    if !(0.0..1.0).contains(&drop_fraction) {
        return Err(DataError::BadDropFraction {
            value: drop_fraction,
        });
    }

    let mut by_speaker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, record) in manifest.records.iter().enumerate() {
        by_speaker.entry(&record.speaker).or_default().push(i);
    }

    let mut kept = vec![true; manifest.len()];
    for idxs in by_speaker.values() {
        let metrics: Vec<Option<QualityMetrics>> =
            idxs.iter().map(|&i| manifest.records[i].metrics).collect();
        let ids: Vec<&str> = idxs.iter().map(|&i| manifest.records[i].id.as_str()).collect();
        let comps = composites(&metrics);
        let budget =
            ((drop_fraction * idxs.len() as f64).ceil() as usize).min(idxs.len() - 1);
        for &p in drop_order(&comps, &ids).iter().take(budget) {
            kept[idxs[p]] = false;
        }
    }

    let records = manifest
        .records
        .iter()
        .enumerate()
        .map(|(i, record)| {
            let mut record = record.clone();
            record.kept = Some(kept[i]);
            record
        })
        .collect();
    Ok(CorpusManifest {
        records,
        root: manifest.root.clone(),
        provenance: manifest.provenance,
    })
}

/// Keep only the `n` best speakers by mean composite badness, computed
/// with corpus-wide z-scores so speakers are comparable. Speakers with no
/// scorable record rank last; ties prefer the lexicographically smaller
/// name. Passing `n` at or above the speaker count is the identity.
pub fn top_speakers(manifest: &CorpusManifest, n: usize) -> Result<CorpusManifest, DataError> {
    if n == 0 {
        return Err(DataError::BadSpeakerCount);
    }
    let metrics: Vec<Option<QualityMetrics>> =
        manifest.records.iter().map(|r| r.metrics).collect();
    let comps = composites(&metrics);

    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (i, record) in manifest.records.iter().enumerate() {
        let entry = sums.entry(&record.speaker).or_insert((0.0, 0));
        if let Some(c) = comps[i] {
            entry.0 += c;
            entry.1 += 1;
        }
    }
    let mut ranking: Vec<(f64, &str)> = sums
        .iter()
        .map(|(&speaker, &(sum, count))| {
            let mean = if count == 0 {
                f64::INFINITY
            } else {
                sum / count as f64
            };
            (mean, speaker)
        })
        .collect();
    ranking.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(b.1)));
    let selected: std::collections::BTreeSet<&str> =
        ranking.iter().take(n).map(|&(_, s)| s).collect();

    let records = manifest
        .records
        .iter()
        .filter(|r| selected.contains(r.speaker.as_str()))
        .cloned()
        .collect();
    Ok(CorpusManifest {
        records,
        root: manifest.root.clone(),
        provenance: manifest.provenance,
    })
}
