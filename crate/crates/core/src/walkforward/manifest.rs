use serde_json::{json, Value};

use super::ExperimentResult;

/// Run manifest: config echo, data fingerprint, and every month's grid with
/// scores, seeds and the selected cell. Contains no wall-clock values, so
/// identical runs produce identical manifests.
pub fn manifest_json(result: &ExperimentResult, extra: Value) -> Value {
    let learners: serde_json::Map<String, Value> = result
        .runs
        .iter()
        .map(|run| {
            let months: Vec<Value> = run
                .months
                .iter()
                .map(|m| {
                    json!({
                        "test_month": m.layout.test,
                        "validation_month": m.layout.validation,
                        "training": m.layout.training,
                        "universe_lookback": m.layout.universe_lookback,
                        "selected": m.selected,
                        "degenerate": m.degenerate,
                        "test_days": m.test_days,
                        "cells": m.cells,
                    })
                })
                .collect();
            let degenerate = run.months.iter().filter(|m| m.degenerate).count();
            (
                run.kind.to_string(),
                json!({
                    "months": months,
                    "degenerate_months": degenerate,
                    "days": run.days.len(),
                }),
            )
        })
        .collect();
    json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": result.config,
        "split_date": result.config.split_date(),
        "data_fingerprint": result.fingerprint,
        "learners": learners,
        "extra": extra,
    })
}
