//! Economy-level power sums composed from per-agent tapes, and averages of
//! agents' expectation labels weighted by the trades made under them.
//!
//! A trade shared by two agents' tapes (same `trade_id`) counts once: the
//! first tape in iteration order that lists it keeps it.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TapeRecord;
use crate::power_sums::{check_order, CompensatedSum, PowerSums};
use crate::scalar::Scalar;
use crate::trade::{TradeTick, WindowSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentTape<T> {
    pub agent_id: String,
    pub ticks: Vec<TradeTick<T>>,
    /// One label per tick when present.
    pub expectations: Option<Vec<T>>,
    /// One optional identifier per tick, used to drop duplicated trades.
    pub trade_ids: Option<Vec<Option<String>>>,
}

impl<T: Scalar> AgentTape<T> {
    pub fn new(agent_id: impl Into<String>, ticks: Vec<TradeTick<T>>) -> Self {
        AgentTape {
            agent_id: agent_id.into(),
            ticks,
            expectations: None,
            trade_ids: None,
        }
    }

    pub fn with_expectations(mut self, expectations: Vec<T>) -> Result<Self> {
        if expectations.len() != self.ticks.len() {
            return Err(Error::BadSpec(format!(
                "agent {}: {} expectations for {} ticks",
                self.agent_id,
                expectations.len(),
                self.ticks.len()
            )));
        }
        self.expectations = Some(expectations);
        Ok(self)
    }

    pub fn with_trade_ids(mut self, ids: Vec<Option<String>>) -> Result<Self> {
        if ids.len() != self.ticks.len() {
            return Err(Error::BadSpec(format!(
                "agent {}: {} trade ids for {} ticks",
                self.agent_id,
                ids.len(),
                self.ticks.len()
            )));
        }
        self.trade_ids = Some(ids);
        Ok(self)
    }

    /// Groups parsed records by their `agent_id` column, falling back to
    /// `default_agent` for records without one. Agents appear in first-seen
    /// order. Expectations are kept only for agents whose every record has one;
    /// a partially labelled agent keeps `None` labels as missing.
    pub fn from_records(records: Vec<TapeRecord<T>>, default_agent: &str) -> Vec<AgentTape<T>> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: BTreeMap<String, Vec<TapeRecord<T>>> = BTreeMap::new();
        for rec in records {
            let id = rec.agent_id.clone().unwrap_or_else(|| default_agent.to_string());
            if !groups.contains_key(&id) {
                order.push(id.clone());
            }
            groups.entry(id).or_default().push(rec);
        }
        order
            .into_iter()
            .map(|id| {
                let recs = groups.remove(&id).unwrap_or_default();
                let expectations = recs.iter().map(|r| r.expectation).collect::<Option<Vec<T>>>();
                let any_ids = recs.iter().any(|r| r.trade_id.is_some());
                AgentTape {
                    ticks: recs.iter().map(|r| r.tick).collect(),
                    trade_ids: any_ids.then(|| recs.iter().map(|r| r.trade_id.clone()).collect()),
                    expectations,
                    agent_id: id,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroVariables<T> {
    pub n_max: usize,
    pub per_agent: BTreeMap<String, PowerSums<T>>,
    pub totals: PowerSums<T>,
}

/// In-window ticks of every tape after dropping duplicated trade ids, paired
/// with their agent and optional expectation.
fn deduplicated<'a, T: Scalar>(
    tapes: &'a [AgentTape<T>],
    window: &WindowSpec,
) -> Vec<(&'a AgentTape<T>, &'a TradeTick<T>, Option<T>)> {
    let mut seen: HashSet<&str> = HashSet::new();
    let mut out = Vec::new();
    for tape in tapes {
        for (i, tick) in tape.ticks.iter().enumerate() {
            if !window.contains(tick.timestamp) {
                continue;
            }
            let id = tape.trade_ids.as_ref().and_then(|ids| ids[i].as_deref());
            if let Some(id) = id {
                if !seen.insert(id) {
                    continue;
                }
            }
            out.push((tape, tick, tape.expectations.as_ref().map(|e| e[i])));
        }
    }
    out
}

/// Per-agent and total power sums over one window. Agents sharing an id are
/// merged; agents without in-window trades report `N = 0`.
pub fn aggregate_macro<T: Scalar>(
    tapes: &[AgentTape<T>],
    window: &WindowSpec,
    n_max: usize,
) -> Result<MacroVariables<T>> {
    check_order(n_max)?;
    if tapes.is_empty() {
        return Err(Error::EmptyWindowAll);
    }
    let mut per_agent: BTreeMap<String, PowerSums<T>> = BTreeMap::new();
    for tape in tapes {
        if !per_agent.contains_key(&tape.agent_id) {
            per_agent.insert(tape.agent_id.clone(), PowerSums::empty(n_max)?);
        }
    }
    for (tape, tick, _) in deduplicated(tapes, window) {
        per_agent.get_mut(&tape.agent_id).expect("agent registered").push(tick);
    }
    let mut totals = PowerSums::empty(n_max)?;
    for sums in per_agent.values() {
        sums.check_finite()?;
        totals.merge(sums)?;
    }
    if totals.count() == 0 {
        return Err(Error::EmptyWindowAll);
    }
    totals.check_finite()?;
    Ok(MacroVariables {
        n_max,
        per_agent,
        totals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    #[default]
    Value,
    Volume,
    Count,
}

/// `sum e_i w_i^n / sum w_i^n` over the deduplicated in-window trades, with
/// `w` the trade value, volume, or 1.
pub fn weighted_expectation<T: Scalar>(
    tapes: &[AgentTape<T>],
    window: &WindowSpec,
    weight: Weight,
    power: usize,
) -> Result<T> {
    if power == 0 {
        return Err(Error::InvalidOrder {
            n_max: 0,
            cap: usize::MAX,
        });
    }
    let trades = deduplicated(tapes, window);
    if trades.is_empty() {
        return Err(Error::EmptyWindowAll);
    }
    let mut numerator = CompensatedSum::new();
    let mut denominator = CompensatedSum::new();
    for (tape, tick, expectation) in trades {
        let e = expectation.ok_or_else(|| Error::MissingExpectations {
            agent: tape.agent_id.clone(),
        })?;
        let w = match weight {
            Weight::Value => tick.value.powi(power as i32),
            Weight::Volume => tick.volume.powi(power as i32),
            Weight::Count => T::one(),
        };
        numerator += e * w;
        denominator += w;
    }
    Ok(numerator.value() / denominator.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power_sums::accumulate_ticks;
    use crate::trade::{make_tick, Alignment, Timestamp};
    use proptest::prelude::*;

    fn tick(ts: i64, p: f64, u: f64) -> TradeTick<f64> {
        make_tick(Timestamp(ts), p, u, None).unwrap()
    }

    fn everything() -> WindowSpec {
        WindowSpec::starting_at(Timestamp(0), 1_000, Alignment::Centered).unwrap()
    }

    fn labelled(id: &str, ticks: Vec<TradeTick<f64>>, e: Vec<f64>) -> AgentTape<f64> {
        AgentTape::new(id, ticks).with_expectations(e).unwrap()
    }

    #[test]
    fn two_agents_hand_sums() {
        let tapes = [
            AgentTape::new("a", vec![tick(1, 2.0, 3.0)]),
            AgentTape::new("b", vec![tick(2, 2.0, 2.0)]),
        ];
        let m = aggregate_macro(&tapes, &everything(), 2).unwrap();
        assert_eq!(m.totals.value_sums(), vec![10.0, 52.0]);
        assert_eq!(m.per_agent["a"].value_sums(), vec![6.0, 36.0]);
    }

    #[test]
    fn single_agent_identity() {
        let ticks = vec![tick(1, 2.0, 3.0), tick(5, 1.5, 0.5)];
        let m = aggregate_macro(&[AgentTape::new("solo", ticks.clone())], &everything(), 3).unwrap();
        assert_eq!(m.totals, accumulate_ticks(&ticks, 3).unwrap());
        assert_eq!(m.per_agent["solo"], m.totals);
    }

    #[test]
    fn window_filters_ticks() {
        let spec = WindowSpec::starting_at(Timestamp(0), 10, Alignment::Trailing).unwrap();
        let tapes = [
            AgentTape::new("a", vec![tick(1, 1.0, 1.0), tick(10, 5.0, 1.0)]),
            AgentTape::new("b", vec![tick(20, 1.0, 1.0)]),
        ];
        let m = aggregate_macro(&tapes, &spec, 1).unwrap();
        assert_eq!(m.totals.count(), 1);
        assert_eq!(m.per_agent["b"].count(), 0);
        let late = WindowSpec::starting_at(Timestamp(100), 10, Alignment::Trailing).unwrap();
        assert_eq!(aggregate_macro(&tapes, &late, 1).unwrap_err(), Error::EmptyWindowAll);
    }

    #[test]
    fn duplicated_trades_count_once() {
        let shared = tick(3, 4.0, 2.0);
        let a = AgentTape::new("a", vec![tick(1, 1.0, 1.0), shared])
            .with_trade_ids(vec![Some("t1".into()), Some("t2".into())])
            .unwrap();
        let b = AgentTape::new("b", vec![shared])
            .with_trade_ids(vec![Some("t2".into())])
            .unwrap();
        let once = aggregate_macro(std::slice::from_ref(&a), &everything(), 2).unwrap();
        let twice = aggregate_macro(&[a.clone(), b.clone()], &everything(), 2).unwrap();
        assert_eq!(once.totals.value_sums(), twice.totals.value_sums());
        assert_eq!(twice.per_agent["b"].count(), 0);
        let again = aggregate_macro(&[a.clone(), b.clone(), b], &everything(), 2).unwrap();
        assert_eq!(again.totals, twice.totals);
    }

    #[test]
    fn hand_weighted_expectations() {
        // Two trades with values 1 and 9 made under expectations 0 and 1.
        let tapes = [
            labelled("lo", vec![tick(1, 1.0, 1.0)], vec![0.0]),
            labelled("hi", vec![tick(2, 3.0, 3.0)], vec![1.0]),
        ];
        let w = everything();
        assert_eq!(weighted_expectation(&tapes, &w, Weight::Value, 1).unwrap(), 0.9);
        assert_eq!(weighted_expectation(&tapes, &w, Weight::Count, 1).unwrap(), 0.5);
        assert_eq!(weighted_expectation(&tapes, &w, Weight::Value, 2).unwrap(), 81.0 / 82.0);
        assert_eq!(weighted_expectation(&tapes, &w, Weight::Volume, 1).unwrap(), 0.75);
    }

    #[test]
    fn constant_expectations() {
        let tapes = [labelled(
            "a",
            vec![tick(1, 2.0, 7.0), tick(2, 0.5, 1.0)],
            vec![0.3, 0.3],
        )];
        for weight in [Weight::Value, Weight::Volume, Weight::Count] {
            for n in 1..=4 {
                let e = weighted_expectation(&tapes, &everything(), weight, n).unwrap();
                assert!((e - 0.3).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn missing_expectations() {
        let tapes = [
            labelled("a", vec![tick(1, 1.0, 1.0)], vec![1.0]),
            AgentTape::new("b", vec![tick(2, 1.0, 1.0)]),
        ];
        assert_eq!(
            weighted_expectation(&tapes, &everything(), Weight::Value, 1).unwrap_err(),
            Error::MissingExpectations { agent: "b".into() }
        );
        assert!(AgentTape::new("c", vec![tick(1, 1.0, 1.0)])
            .with_expectations(vec![])
            .is_err());
    }

    #[test]
    fn records_grouped_by_agent() {
        let text = "ts,price,volume,agent_id,expectation\n0,1,1,x,0.1\n1,2,1,y,\n2,3,1,x,0.3\n3,1,1,,0.2\n";
        let recs = crate::ingest::parse_records::<f64, _>(text.as_bytes(), &crate::ingest::TapeFormat::csv()).unwrap();
        let tapes = AgentTape::from_records(recs, "file");
        let ids: Vec<&str> = tapes.iter().map(|t| t.agent_id.as_str()).collect();
        assert_eq!(ids, vec!["x", "y", "file"]);
        assert_eq!(tapes[0].expectations, Some(vec![0.1, 0.3]));
        assert_eq!(tapes[1].expectations, None);
    }

    fn labelled_trades() -> impl Strategy<Value = Vec<(f64, f64, f64, usize)>> {
        prop::collection::vec((1u32..50, 1u32..50, -5.0f64..5.0, 0usize..4), 1..40)
            .prop_map(|v| v.into_iter().map(|(p, u, e, a)| (p as f64, u as f64, e, a)).collect())
    }

    fn split(trades: &[(f64, f64, f64, usize)], agents: usize) -> Vec<AgentTape<f64>> {
        (0..agents)
            .map(|a| {
                let mine: Vec<_> = trades.iter().enumerate().filter(|(_, t)| t.3 % agents == a).collect();
                labelled(
                    &format!("agent{a}"),
                    mine.iter().map(|(i, t)| tick(*i as i64, t.0, t.1)).collect(),
                    mine.iter().map(|(_, t)| t.2).collect(),
                )
            })
            .collect()
    }

    proptest! {
        #[test]
        fn repartition_invariant(trades in labelled_trades()) {
            let one = aggregate_macro(&split(&trades, 1), &everything(), 3).unwrap();
            let four = aggregate_macro(&split(&trades, 4), &everything(), 3).unwrap();
            // Integer prices and volumes keep every partial sum exact.
            prop_assert_eq!(one.totals.value_sums(), four.totals.value_sums());
            prop_assert_eq!(one.totals.volume_sums(), four.totals.volume_sums());
            prop_assert_eq!(one.totals.count(), four.totals.count());
        }

        #[test]
        fn weighted_mean_within_label_range(trades in labelled_trades(), n in 1usize..4) {
            let tapes = split(&trades, 3);
            let lo = trades.iter().map(|t| t.2).fold(f64::INFINITY, f64::min);
            let hi = trades.iter().map(|t| t.2).fold(f64::NEG_INFINITY, f64::max);
            for weight in [Weight::Value, Weight::Volume, Weight::Count] {
                let e = weighted_expectation(&tapes, &everything(), weight, n).unwrap();
                prop_assert!(e >= lo - 1e-12 && e <= hi + 1e-12);
            }
            let plain = trades.iter().map(|t| t.2).sum::<f64>() / trades.len() as f64;
            let count = weighted_expectation(&tapes, &everything(), Weight::Count, n).unwrap();
            prop_assert!((count - plain).abs() <= 1e-12 * (1.0 + plain.abs()));
        }

        #[test]
        fn heavier_powers_favor_larger_trades(values in prop::collection::vec(1u32..100, 2..30)) {
            // Expectations nondecreasing in trade value.
            let mut values: Vec<f64> = values.into_iter().map(f64::from).collect();
            values.sort_by(f64::total_cmp);
            let ticks: Vec<_> = values.iter().enumerate().map(|(i, v)| tick(i as i64, *v, 1.0)).collect();
            let labels: Vec<f64> = values.iter().map(|v| v.ln()).collect();
            let tapes = [labelled("a", ticks, labels)];
            let mut prev = f64::NEG_INFINITY;
            for n in 1..=5 {
                let e = weighted_expectation(&tapes, &everything(), Weight::Value, n).unwrap();
                prop_assert!(e >= prev - 1e-12);
                prev = e;
            }
        }
    }
}
