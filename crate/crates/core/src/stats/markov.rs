use crate::chain::{estimate_second_order, ChainModel, CountMatrix, NUM_STATES};
use crate::ingest::StateSequence;
use crate::types::DriverState;

use super::contingency::{pearson_chi_square, ContingencyTable};
use super::gamma::chi_square_sf;
use super::{StatsError, TestKind, TestResult};

fn cell_label(m: &CountMatrix, from: usize, to: usize) -> String {
    let f = DriverState::from_code(from).expect("code").letter();
    let t = DriverState::from_code(to).expect("code").letter();
    format!("{} {f}->{t}", m.step)
}

/// Pearson test of G groups over pooled transition cells.
pub fn test_homogeneity(subgroups: &[(String, Vec<CountMatrix>)]) -> Result<TestResult, StatsError> {
    if subgroups.len() < 2 {
        return Err(StatsError::Inapplicable(format!(
            "need at least two subgroups, got {}",
            subgroups.len()
        )));
    }
    let reference = &subgroups[0].1;
    for (label, mats) in &subgroups[1..] {
        let same = mats.len() == reference.len() && mats.iter().zip(reference).all(|(a, b)| a.step == b.step);
        if !same {
            return Err(StatsError::Mismatch(format!(
                "group {label:?} covers different steps than {:?}",
                subgroups[0].0
            )));
        }
    }
    if reference.is_empty() {
        return Err(StatsError::Inapplicable("no count matrices".into()));
    }
    let mut col_labels = Vec::new();
    for m in reference {
        for from in 0..NUM_STATES {
            for to in 0..NUM_STATES {
                col_labels.push(cell_label(m, from, to));
            }
        }
    }
    let rows: Vec<Vec<u64>> = subgroups
        .iter()
        .map(|(_, mats)| mats.iter().flat_map(|m| m.counts.iter().flatten().copied()).collect())
        .collect();
    let labels = subgroups.iter().map(|(l, _)| l.clone()).collect();
    let table = ContingencyTable::new(labels, col_labels, rows)?;
    let mut result = pearson_chi_square(&table)?;
    result.kind = TestKind::Homogeneity;
    result.notes.insert(
        0,
        format!("{} groups × {} retained transition cells", table.rows(), table.cols()),
    );
    Ok(result)
}

/// Two-group homogeneity test over pooled 1→2 and 2→3 cells.
pub fn compare_groups(group_a: &[CountMatrix], group_b: &[CountMatrix]) -> Result<TestResult, StatsError> {
    let mut result = test_homogeneity(&[("a".to_string(), group_a.to_vec()), ("b".to_string(), group_b.to_vec())])?;
    result.kind = TestKind::Compare;
    Ok(result)
}

/// Per-origin-state step × destination tables, summed.
pub fn test_stationarity(chain: &ChainModel) -> Result<TestResult, StatsError> {
    let [first, second] = chain.step_counts();
    let mut statistic = 0.0;
    let mut df = 0;
    let mut notes = Vec::new();
    let mut tables = Vec::new();
    for origin in DriverState::ALL {
        let i = origin.code();
        if first.row_total(i) == 0 || second.row_total(i) == 0 {
            notes.push(format!("skipped origin {origin}: absent at one step"));
            continue;
        }
        let table = ContingencyTable::new(
            vec![format!("{origin} {}", first.step), format!("{origin} {}", second.step)],
            DriverState::ALL.iter().map(|s| format!("to {}", s.letter())).collect(),
            vec![first.counts[i].to_vec(), second.counts[i].to_vec()],
        )?;
        if !table.is_testable() {
            notes.push(format!("skipped origin {origin}: single destination at both steps"));
            continue;
        }
        statistic += table.pearson_statistic();
        df += table.df();
        notes.extend(table.dropped.iter().map(|d| format!("origin {origin}: dropped {d}")));
        tables.push(table);
    }
    if df == 0 {
        return Err(StatsError::Inapplicable("no origin state testable at both steps".into()));
    }
    Ok(TestResult {
        kind: TestKind::Stationarity,
        statistic,
        df,
        p_value: chi_square_sf(statistic, df)?,
        notes,
        tables,
    })
}

/// Likelihood-ratio test of second- against first-order dependence at 2→3.
///
/// G² = 2 Σ n_ijk ln(p̂(k|i,j) / p̂(k|j)); df = 2 · (observed contexts) −
/// 2 · (distinct middle states observed).
pub fn test_order(seqs: &[StateSequence]) -> Result<TestResult, StatsError> {
    let model = estimate_second_order(seqs).map_err(|e| StatsError::Inapplicable(e.to_string()))?;
    let contexts = model.observed_contexts();
    if contexts.len() < 2 {
        return Err(StatsError::Inapplicable(format!(
            "{} observed (s1, s2) context(s); need at least two",
            contexts.len()
        )));
    }
    let mut middles: Vec<DriverState> = contexts.iter().map(|&(_, j)| j).collect();
    middles.sort();
    middles.dedup();

    let mut g2 = 0.0;
    for &(i, j) in &contexts {
        let second = model.conditional(i, j).expect("observed context");
        let first = model.first_order(j).expect("observed middle state");
        for k in 0..NUM_STATES {
            let n = model.counts[i.code()][j.code()][k];
            if n > 0 {
                g2 += n as f64 * (second[k] / first[k]).ln();
            }
        }
    }
    let g2 = (2.0 * g2).max(0.0);
    let df = 2 * (contexts.len() as u32) - 2 * (middles.len() as u32);
    if df == 0 {
        return Err(StatsError::Inapplicable(
            "every middle state has a single observed predecessor".into(),
        ));
    }
    let notes = vec![
        format!("{} observed contexts, {} distinct middle states", contexts.len(), middles.len()),
        "df = 2·contexts − 2·middle states".to_string(),
    ];
    Ok(TestResult {
        kind: TestKind::Order,
        statistic: g2,
        df,
        p_value: chi_square_sf(g2, df)?,
        notes,
        tables: Vec::new(),
    })
}
