//! Analyses over conductance tensors: positional importance profiles,
//! primacy/recency fractions, cross-text consistency, position-averaged word
//! importance with POS grouping, and layer dominance.
//!
//! Missing tensor cells (NaN, from skipped windows) are excluded from every
//! aggregate; counts record how many words actually contributed.

pub mod csv;
pub mod stats;

use std::collections::BTreeMap;

use ndarray::Array2;
use thiserror::Error;

use crate::corpus::{CorpusText, Genre, PosClass};
use crate::windowing::ConductanceTensor;

pub use stats::{nan_mean_var, pearson, spearman};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("tensor has no retained words")]
    EmptyTensor,
    #[error("layer {layer} profile total is (numerically) zero; fractions are undefined")]
    ZeroTotal { layer: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("tensor and text are misaligned: {0}")]
    AlignmentFailure(String),
    #[error("window length {window_len} leaves no positions in a {fraction} fraction")]
    FractionTooSmall { window_len: usize, fraction: f64 },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Per-layer mean (and variance) of word conductance at each relative
/// position.
#[derive(Debug, Clone)]
pub struct PositionalProfile {
    /// `[layers, positions]` means over the word axis.
    pub means: Array2<f64>,
    /// `[layers, positions]` population variances over the word axis.
    pub variances: Array2<f64>,
    /// Contributing word counts per cell (NaN cells excluded).
    pub counts: Array2<usize>,
    pub word_count: usize,
    pub text_id: String,
}

/// Mean and variance over the tensor's word axis per (layer, position).
pub fn positional_profile(t: &ConductanceTensor) -> Result<PositionalProfile, AnalysisError> {
    let (layers, words, positions) = t.data.dim();
    if words == 0 || layers == 0 || positions == 0 {
        return Err(AnalysisError::EmptyTensor);
    }
    let mut means = Array2::zeros((layers, positions));
    let mut variances = Array2::zeros((layers, positions));
    let mut counts = Array2::from_elem((layers, positions), 0usize);
    for l in 0..layers {
        for p in 0..positions {
            let (mean, var, n) = nan_mean_var((0..words).map(|w| t.data[[l, w, p]]));
            means[[l, p]] = mean;
            variances[[l, p]] = var;
            counts[[l, p]] = n;
        }
    }
    Ok(PositionalProfile {
        means,
        variances,
        counts,
        word_count: words,
        text_id: t.manifest.text_id.clone(),
    })
}

/// Per-layer primacy and recency fractions over the first/last
/// `floor(fraction * P)` positions.
#[derive(Debug, Clone)]
pub struct BiasMetrics {
    pub primacy: Vec<f64>,
    pub recency: Vec<f64>,
    /// 1-based positions counted as primacy / recency.
    pub primacy_positions: Vec<usize>,
    pub recency_positions: Vec<usize>,
    /// 1-based layers whose profile total is negative (fractions are then
    /// reported as-is and can leave [0, 1]).
    pub negative_total_layers: Vec<usize>,
}

pub fn primacy_recency(
    profile: &PositionalProfile,
    fraction: f64,
) -> Result<BiasMetrics, AnalysisError> {
    let (layers, positions) = profile.means.dim();
    let band = ((fraction * positions as f64).floor()) as usize;
    if band == 0 {
        return Err(AnalysisError::FractionTooSmall {
            window_len: positions,
            fraction,
        });
    }
    let primacy_positions: Vec<usize> = (1..=band).collect();
    let recency_positions: Vec<usize> = (positions - band + 1..=positions).collect();
    let mut primacy = Vec::with_capacity(layers);
    let mut recency = Vec::with_capacity(layers);
    let mut negative_total_layers = Vec::new();
    for l in 0..layers {
        let total: f64 = profile.means.row(l).sum();
        if total.abs() < 1e-12 {
            return Err(AnalysisError::ZeroTotal { layer: l + 1 });
        }
        if total < 0.0 {
            negative_total_layers.push(l + 1);
        }
        let prim: f64 = primacy_positions.iter().map(|&p| profile.means[[l, p - 1]]).sum();
        let rec: f64 = recency_positions.iter().map(|&p| profile.means[[l, p - 1]]).sum();
        primacy.push(prim / total);
        recency.push(rec / total);
    }
    Ok(BiasMetrics {
        primacy,
        recency,
        primacy_positions,
        recency_positions,
        negative_total_layers,
    })
}

/// Mean pairwise Pearson correlation of positional profiles, per layer.
#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    /// Per-layer mean pairwise r (NaN when no pair was valid).
    pub mean_r: Vec<f64>,
    /// Valid pair count per layer.
    pub pair_counts: Vec<usize>,
    /// Pairs dropped because one profile vector had zero variance.
    pub excluded_pairs: usize,
}

pub fn profile_consistency(
    profiles: &[&PositionalProfile],
) -> Result<ConsistencyReport, AnalysisError> {
    if profiles.len() < 2 {
        return Err(AnalysisError::ShapeMismatch(
            "consistency needs at least two profiles".into(),
        ));
    }
    let dim = profiles[0].means.dim();
    for p in profiles {
        if p.means.dim() != dim {
            return Err(AnalysisError::ShapeMismatch(format!(
                "profile {} is {:?}, expected {:?}",
                p.text_id,
                p.means.dim(),
                dim
            )));
        }
    }
    let (layers, _) = dim;
    let mut mean_r = Vec::with_capacity(layers);
    let mut pair_counts = Vec::with_capacity(layers);
    let mut excluded = 0usize;
    for l in 0..layers {
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in 0..profiles.len() {
            for j in i + 1..profiles.len() {
                let a = profiles[i].means.row(l).to_vec();
                let b = profiles[j].means.row(l).to_vec();
                match pearson(&a, &b) {
                    Some(r) => {
                        sum += r;
                        n += 1;
                    }
                    None => excluded += 1,
                }
            }
        }
        mean_r.push(if n > 0 { sum / n as f64 } else { f64::NAN });
        pair_counts.push(n);
    }
    Ok(ConsistencyReport {
        mean_r,
        pair_counts,
        excluded_pairs: excluded,
    })
}

/// Position-averaged word importance (mean over the position axis).
#[derive(Debug, Clone)]
pub struct WordImportance {
    /// `[layers, words]`.
    pub values: Array2<f64>,
    /// 1-based text index of each tensor word.
    pub word_indices: Vec<usize>,
    pub text_id: String,
}

pub fn position_averaged_importance(
    t: &ConductanceTensor,
) -> Result<WordImportance, AnalysisError> {
    let (layers, words, positions) = t.data.dim();
    if words == 0 || layers == 0 || positions == 0 {
        return Err(AnalysisError::EmptyTensor);
    }
    let mut values = Array2::zeros((layers, words));
    for l in 0..layers {
        for w in 0..words {
            let (mean, _, _) = nan_mean_var((0..positions).map(|p| t.data[[l, w, p]]));
            values[[l, w]] = mean;
        }
    }
    Ok(WordImportance {
        values,
        word_indices: t.word_index_map.clone(),
        text_id: t.manifest.text_id.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosTagImportanceRow {
    pub layer: usize,
    pub pos_tag: String,
    pub pos_class: PosClass,
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosClassImportanceRow {
    pub layer: usize,
    pub pos_class: PosClass,
    pub mean: f64,
    pub count: usize,
}

/// POS-grouped importance means, pooled over texts after position averaging.
#[derive(Debug, Clone)]
pub struct PosGroupedImportance {
    pub by_tag: Vec<PosTagImportanceRow>,
    pub by_class: Vec<PosClassImportanceRow>,
    /// Scrambled texts dropped from the pool.
    pub excluded_texts: Vec<String>,
}

fn lookup_word<'a>(
    text: &'a CorpusText,
    importance: &WordImportance,
    w: usize,
) -> Result<&'a crate::corpus::WordRecord, AnalysisError> {
    if importance.text_id != text.text_id {
        return Err(AnalysisError::AlignmentFailure(format!(
            "importance is for text {:?}, got text {:?}",
            importance.text_id, text.text_id
        )));
    }
    let text_index = importance.word_indices[w];
    text.words.get(text_index - 1).ok_or_else(|| {
        AnalysisError::AlignmentFailure(format!(
            "word index {text_index} outside text {:?} ({} words)",
            text.text_id,
            text.words.len()
        ))
    })
}

/// Groups position-averaged importance by POS tag and class, pooling words
/// across texts. Scrambled texts are excluded so every pool draws on the
/// same word sets.
pub fn pos_grouped_importance(
    items: &[(&WordImportance, &CorpusText)],
) -> Result<PosGroupedImportance, AnalysisError> {
    if items.is_empty() {
        return Err(AnalysisError::ShapeMismatch("no texts to pool".into()));
    }
    let layers = items[0].0.values.nrows();
    let mut excluded_texts = Vec::new();
    // (layer, tag) -> (sum, count); BTreeMap keeps output deterministic.
    let mut tag_acc: BTreeMap<(usize, String), (f64, usize)> = BTreeMap::new();
    let mut class_acc: BTreeMap<(usize, &'static str), (f64, usize, PosClass)> = BTreeMap::new();
    for (importance, text) in items {
        if importance.values.nrows() != layers {
            return Err(AnalysisError::ShapeMismatch(format!(
                "text {:?} has {} layers, expected {layers}",
                text.text_id,
                importance.values.nrows()
            )));
        }
        if text.genre == Genre::Scrambled {
            excluded_texts.push(text.text_id.clone());
            continue;
        }
        for w in 0..importance.values.ncols() {
            let record = lookup_word(text, importance, w)?;
            for l in 0..layers {
                let v = importance.values[[l, w]];
                if v.is_nan() {
                    continue;
                }
                let tag_entry = tag_acc
                    .entry((l, record.pos_tag.clone()))
                    .or_insert((0.0, 0));
                tag_entry.0 += v;
                tag_entry.1 += 1;
                let class_entry = class_acc
                    .entry((l, record.pos_class.name()))
                    .or_insert((0.0, 0, record.pos_class));
                class_entry.0 += v;
                class_entry.1 += 1;
            }
        }
    }
    let by_tag = tag_acc
        .into_iter()
        .map(|((l, tag), (sum, count))| PosTagImportanceRow {
            layer: l + 1,
            pos_class: crate::corpus::pos_class_for(&tag),
            pos_tag: tag,
            mean: sum / count as f64,
            count,
        })
        .collect();
    let by_class = class_acc
        .into_iter()
        .map(|((l, _), (sum, count, class))| PosClassImportanceRow {
            layer: l + 1,
            pos_class: class,
            mean: sum / count as f64,
            count,
        })
        .collect();
    Ok(PosGroupedImportance {
        by_tag,
        by_class,
        excluded_texts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DominanceMode {
    PerPosition,
    PositionAveraged,
}

/// Argmax-layer assignments; ties break to the lowest layer index. Words
/// with missing data (NaN across the layer axis) get no assignment and are
/// excluded from distributions.
#[derive(Debug, Clone)]
pub struct DominanceTable {
    pub mode: DominanceMode,
    pub layer_count: usize,
    /// Per-position mode: 1-based dominant layer per `[word, position]`
    /// (0 marks missing data).
    pub dominant_per_word_position: Option<Array2<usize>>,
    /// Per-position mode: `[position, layer]` percentages, rows summing
    /// to 100 per position over words with assignments.
    pub distribution_by_position: Option<Array2<f64>>,
    /// Position-averaged mode: 1-based dominant layer per word (0 missing).
    pub dominant_per_word: Option<Vec<usize>>,
    pub word_indices: Vec<usize>,
    pub text_id: String,
}

fn argmax_layer(values: impl Iterator<Item = f64>) -> usize {
    let mut best_layer = 0usize;
    let mut best = f64::NEG_INFINITY;
    let mut any = false;
    for (l, v) in values.enumerate() {
        if v.is_nan() {
            continue;
        }
        any = true;
        if v > best {
            best = v;
            best_layer = l + 1;
        }
    }
    if any {
        best_layer
    } else {
        0
    }
}

pub fn layer_dominance(
    t: &ConductanceTensor,
    mode: DominanceMode,
) -> Result<DominanceTable, AnalysisError> {
    let (layers, words, positions) = t.data.dim();
    if words == 0 || layers == 0 || positions == 0 {
        return Err(AnalysisError::EmptyTensor);
    }
    if layers < 2 {
        return Err(AnalysisError::ShapeMismatch(
            "dominance needs at least two layers".into(),
        ));
    }
    let mut table = DominanceTable {
        mode,
        layer_count: layers,
        dominant_per_word_position: None,
        distribution_by_position: None,
        dominant_per_word: None,
        word_indices: t.word_index_map.clone(),
        text_id: t.manifest.text_id.clone(),
    };
    match mode {
        DominanceMode::PerPosition => {
            let mut dominant = Array2::from_elem((words, positions), 0usize);
            for w in 0..words {
                for p in 0..positions {
                    dominant[[w, p]] = argmax_layer((0..layers).map(|l| t.data[[l, w, p]]));
                }
            }
            table.distribution_by_position =
                Some(distribution_from_assignments(&dominant, layers));
            table.dominant_per_word_position = Some(dominant);
        }
        DominanceMode::PositionAveraged => {
            let importance = position_averaged_importance(t)?;
            let dominant: Vec<usize> = (0..words)
                .map(|w| argmax_layer((0..layers).map(|l| importance.values[[l, w]])))
                .collect();
            table.dominant_per_word = Some(dominant);
        }
    }
    Ok(table)
}

/// `[position, layer]` percentages from 1-based per-(word, position)
/// assignments (0 = missing, excluded from the denominator).
fn distribution_from_assignments(dominant: &Array2<usize>, layers: usize) -> Array2<f64> {
    let (words, positions) = dominant.dim();
    let mut out = Array2::zeros((positions, layers));
    for p in 0..positions {
        let mut counts = vec![0usize; layers];
        let mut total = 0usize;
        for w in 0..words {
            let l = dominant[[w, p]];
            if l > 0 {
                counts[l - 1] += 1;
                total += 1;
            }
        }
        if total > 0 {
            for l in 0..layers {
                out[[p, l]] = 100.0 * counts[l] as f64 / total as f64;
            }
        }
    }
    out
}

/// Pools per-position dominance across texts (concatenating word axes) into
/// one `[position, layer]` percentage table.
pub fn pooled_position_distribution(
    tables: &[&DominanceTable],
) -> Result<Array2<f64>, AnalysisError> {
    if tables.is_empty() {
        return Err(AnalysisError::ShapeMismatch("no tables to pool".into()));
    }
    let first = tables[0]
        .dominant_per_word_position
        .as_ref()
        .ok_or_else(|| AnalysisError::ShapeMismatch("table lacks per-position data".into()))?;
    let positions = first.ncols();
    let layers = tables[0].layer_count;
    let mut rows = Vec::new();
    for t in tables {
        let d = t.dominant_per_word_position.as_ref().ok_or_else(|| {
            AnalysisError::ShapeMismatch("table lacks per-position data".into())
        })?;
        if d.ncols() != positions || t.layer_count != layers {
            return Err(AnalysisError::ShapeMismatch(format!(
                "table {:?} has incompatible shape",
                t.text_id
            )));
        }
        for w in 0..d.nrows() {
            rows.push(d.row(w).to_vec());
        }
    }
    let stacked = Array2::from_shape_vec(
        (rows.len(), positions),
        rows.into_iter().flatten().collect(),
    )
    .expect("row-major stack of equally sized rows");
    Ok(distribution_from_assignments(&stacked, layers))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosDominanceRow {
    pub pos_tag: String,
    pub layer: usize,
    pub percent: f64,
    pub count: usize,
}

/// Dominance-by-POS distribution: percentage of each tag's words dominated
/// by each layer (position-averaged dominance, pooled across non-scrambled
/// texts).
pub fn dominance_by_pos(
    items: &[(&DominanceTable, &CorpusText)],
) -> Result<Vec<PosDominanceRow>, AnalysisError> {
    if items.is_empty() {
        return Err(AnalysisError::ShapeMismatch("no tables to pool".into()));
    }
    let layers = items[0].0.layer_count;
    // tag -> per-layer counts.
    let mut acc: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (table, text) in items {
        let dominant = table.dominant_per_word.as_ref().ok_or_else(|| {
            AnalysisError::ShapeMismatch("table lacks position-averaged data".into())
        })?;
        if table.layer_count != layers {
            return Err(AnalysisError::ShapeMismatch(
                "tables disagree on layer count".into(),
            ));
        }
        if text.genre == Genre::Scrambled {
            continue;
        }
        if table.text_id != text.text_id {
            return Err(AnalysisError::AlignmentFailure(format!(
                "table is for text {:?}, got text {:?}",
                table.text_id, text.text_id
            )));
        }
        for (w, &layer) in dominant.iter().enumerate() {
            if layer == 0 {
                continue;
            }
            let text_index = table.word_indices[w];
            let record = text.words.get(text_index - 1).ok_or_else(|| {
                AnalysisError::AlignmentFailure(format!(
                    "word index {text_index} outside text {:?}",
                    text.text_id
                ))
            })?;
            acc.entry(record.pos_tag.clone())
                .or_insert_with(|| vec![0; layers])
                [layer - 1] += 1;
        }
    }
    let mut rows = Vec::new();
    for (tag, counts) in acc {
        let total: usize = counts.iter().sum();
        for (l, &c) in counts.iter().enumerate() {
            rows.push(PosDominanceRow {
                pos_tag: tag.clone(),
                layer: l + 1,
                percent: 100.0 * c as f64 / total as f64,
                count: c,
            });
        }
    }
    Ok(rows)
}

/// Pairwise consistency of per-position dominance distributions across
/// texts (flattened [position, layer] percentage matrices).
#[derive(Debug, Clone)]
pub struct DominanceConsistency {
    pub mean_r: f64,
    /// (table index a, table index b, r).
    pub pairs: Vec<(usize, usize, f64)>,
    pub excluded_pairs: usize,
}

pub fn dominance_consistency(
    tables: &[&DominanceTable],
) -> Result<DominanceConsistency, AnalysisError> {
    if tables.len() < 2 {
        return Err(AnalysisError::ShapeMismatch(
            "consistency needs at least two tables".into(),
        ));
    }
    let mut flats = Vec::with_capacity(tables.len());
    for t in tables {
        let d = t.distribution_by_position.as_ref().ok_or_else(|| {
            AnalysisError::ShapeMismatch("table lacks a position distribution".into())
        })?;
        flats.push(d.iter().copied().collect::<Vec<f64>>());
    }
    let len = flats[0].len();
    if flats.iter().any(|f| f.len() != len) {
        return Err(AnalysisError::ShapeMismatch(
            "tables disagree on (position, layer) shape".into(),
        ));
    }
    let mut pairs = Vec::new();
    let mut excluded = 0usize;
    let mut sum = 0.0;
    for i in 0..flats.len() {
        for j in i + 1..flats.len() {
            match pearson(&flats[i], &flats[j]) {
                Some(r) => {
                    sum += r;
                    pairs.push((i, j, r));
                }
                None => excluded += 1,
            }
        }
    }
    let mean_r = if pairs.is_empty() {
        f64::NAN
    } else {
        sum / pairs.len() as f64
    };
    Ok(DominanceConsistency {
        mean_r,
        pairs,
        excluded_pairs: excluded,
    })
}
