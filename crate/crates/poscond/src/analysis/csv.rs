//! CSV emission for the analysis outputs (UTF-8, header row, '.' decimal).
//!
//! Every file starts with a `# config_hash=<hex>` comment line when a run
//! hash is supplied, so downstream stages can refuse to mix artifacts from
//! different configurations.

use std::path::Path;

use ndarray::Array2;

use super::{
    AnalysisError, BiasMetrics, ConsistencyReport, DominanceConsistency, PosDominanceRow,
    PosGroupedImportance, PositionalProfile,
};

fn io_err(path: &Path, source: std::io::Error) -> AnalysisError {
    AnalysisError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_csv(path: &Path, config_hash: Option<&str>, header: &str, rows: Vec<String>) -> Result<(), AnalysisError> {
    let mut out = String::new();
    if let Some(hash) = config_hash {
        out.push_str(&format!("# config_hash={hash}\n"));
    }
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads back the `# config_hash=` stamp from a CSV emitted by this module.
pub fn read_embedded_config_hash(path: &Path) -> Result<Option<String>, AnalysisError> {
    let content = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(content
        .lines()
        .next()
        .and_then(|line| line.strip_prefix("# config_hash="))
        .map(str::to_string))
}

/// `profiles.csv`: layer,position,mean,variance
pub fn write_profiles_csv(
    path: &Path,
    profile: &PositionalProfile,
    config_hash: Option<&str>,
) -> Result<(), AnalysisError> {
    let (layers, positions) = profile.means.dim();
    let mut rows = Vec::with_capacity(layers * positions);
    for l in 0..layers {
        for p in 0..positions {
            rows.push(format!(
                "{},{},{},{}",
                l + 1,
                p + 1,
                profile.means[[l, p]],
                profile.variances[[l, p]]
            ));
        }
    }
    write_csv(path, config_hash, "layer,position,mean,variance", rows)
}

/// `metrics.csv`: layer,prim_frac,rec_frac
pub fn write_metrics_csv(
    path: &Path,
    metrics: &BiasMetrics,
    config_hash: Option<&str>,
) -> Result<(), AnalysisError> {
    let rows = metrics
        .primacy
        .iter()
        .zip(metrics.recency.iter())
        .enumerate()
        .map(|(l, (p, r))| format!("{},{},{}", l + 1, p, r))
        .collect();
    write_csv(path, config_hash, "layer,prim_frac,rec_frac", rows)
}

/// Cross-text fraction aggregation, both orders of averaging: per-text
/// fractions averaged, and fractions of the text-averaged profile.
pub fn write_metrics_mean_csv(
    path: &Path,
    mean_of_fractions: &BiasMetrics,
    fractions_of_mean: &BiasMetrics,
    config_hash: Option<&str>,
) -> Result<(), AnalysisError> {
    let rows = (0..mean_of_fractions.primacy.len())
        .map(|l| {
            format!(
                "{},{},{},{},{}",
                l + 1,
                mean_of_fractions.primacy[l],
                mean_of_fractions.recency[l],
                fractions_of_mean.primacy[l],
                fractions_of_mean.recency[l],
            )
        })
        .collect();
    write_csv(
        path,
        config_hash,
        "layer,prim_frac_mean,rec_frac_mean,prim_frac_of_mean_profile,rec_frac_of_mean_profile",
        rows,
    )
}

/// `consistency.csv`: layer,mean_r,n_pairs
pub fn write_consistency_csv(
    path: &Path,
    report: &ConsistencyReport,
    config_hash: Option<&str>,
) -> Result<(), AnalysisError> {
    let rows = report
        .mean_r
        .iter()
        .zip(report.pair_counts.iter())
        .enumerate()
        .map(|(l, (r, n))| format!("{},{},{}", l + 1, r, n))
        .collect();
    write_csv(path, config_hash, "layer,mean_r,n_pairs", rows)
}

/// `pos_importance.csv`: layer,pos_tag,pos_class,mean,count
pub fn write_pos_importance_csv(
    path: &Path,
    grouped: &PosGroupedImportance,
    config_hash: Option<&str>,
) -> Result<(), AnalysisError> {
    let mut rows: Vec<String> = grouped
        .by_tag
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                r.layer,
                r.pos_tag,
                r.pos_class.name(),
                r.mean,
                r.count
            )
        })
        .collect();
    // Class-level pools appended with a CLASS: marker in the tag column.
    rows.extend(grouped.by_class.iter().map(|r| {
        format!(
            "{},CLASS:{},{},{},{}",
            r.layer,
            r.pos_class.name(),
            r.pos_class.name(),
            r.mean,
            r.count
        )
    }));
    write_csv(
        path,
        config_hash,
        "layer,pos_tag,pos_class,mean,count",
        rows,
    )
}

/// `dominance_by_position.csv`: position,layer,percent
pub fn write_dominance_by_position_csv(
    path: &Path,
    distribution: &Array2<f64>,
    config_hash: Option<&str>,
) -> Result<(), AnalysisError> {
    let (positions, layers) = distribution.dim();
    let mut rows = Vec::with_capacity(positions * layers);
    for p in 0..positions {
        for l in 0..layers {
            rows.push(format!("{},{},{}", p + 1, l + 1, distribution[[p, l]]));
        }
    }
    write_csv(path, config_hash, "position,layer,percent", rows)
}

/// `dominance_by_pos.csv`: pos_tag,layer,percent
pub fn write_dominance_by_pos_csv(
    path: &Path,
    rows_in: &[PosDominanceRow],
    config_hash: Option<&str>,
) -> Result<(), AnalysisError> {
    let rows = rows_in
        .iter()
        .map(|r| format!("{},{},{}", r.pos_tag, r.layer, r.percent))
        .collect();
    write_csv(path, config_hash, "pos_tag,layer,percent", rows)
}

/// `dominance_consistency.csv`: pair_a,pair_b,r plus a trailing mean row.
pub fn write_dominance_consistency_csv(
    path: &Path,
    report: &DominanceConsistency,
    labels: &[String],
    config_hash: Option<&str>,
) -> Result<(), AnalysisError> {
    let mut rows: Vec<String> = report
        .pairs
        .iter()
        .map(|(a, b, r)| format!("{},{},{}", labels[*a], labels[*b], r))
        .collect();
    rows.push(format!("MEAN,MEAN,{}", report.mean_r));
    write_csv(path, config_hash, "pair_a,pair_b,r", rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_carries_config_hash_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let metrics = BiasMetrics {
            primacy: vec![0.2, 0.1],
            recency: vec![0.3, 1.0],
            primacy_positions: vec![1, 2],
            recency_positions: vec![9, 10],
            negative_total_layers: vec![],
        };
        write_metrics_csv(&path, &metrics, Some("abc123")).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = content.lines().collect();
        assert_eq!(lines[0], "# config_hash=abc123");
        assert_eq!(lines[1], "layer,prim_frac,rec_frac");
        assert_eq!(lines[2], "1,0.2,0.3");
        assert_eq!(lines[3], "2,0.1,1");
        assert_eq!(
            read_embedded_config_hash(&path).unwrap(),
            Some("abc123".to_string())
        );
    }

    #[test]
    fn csv_without_hash_starts_at_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dom.csv");
        let dist = array![[60.0, 40.0], [0.0, 100.0]];
        write_dominance_by_position_csv(&path, &dist, None).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        assert!(content.starts_with("position,layer,percent\n"));
        assert!(content.contains("1,1,60\n"));
        assert!(content.contains("2,2,100\n"));
        assert_eq!(read_embedded_config_hash(&path).unwrap(), None);
    }
}
