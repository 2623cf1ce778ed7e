//! Route completion, infraction penalty and driving score.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::config::InfractionCoefficients;
use crate::infractions::{InfractionEvent, InfractionKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Goal,
    CollisionStop,
    Blocked,
    RouteDeviation,
    Timeout,
}

impl Termination {
    /// Ended because of the agent's own infraction.
    pub fn is_infraction(self) -> bool {
        matches!(self, Termination::CollisionStop | Termination::Blocked | Termination::RouteDeviation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Percent of the route completed, in [0, 100].
    pub route_completion: f64,
    /// Product of the event coefficients, in [0, 1].
    pub infraction_penalty: f64,
    /// `route_completion * infraction_penalty`, in percent.
    pub driving_score: f64,
    pub infraction_events: Vec<InfractionEvent>,
    pub termination: Termination,
    pub route_length: f64,
    pub distance_driven: f64,
    pub duration: f64,
    /// Events per kilometer driven, by type.
    pub infractions_per_km: BTreeMap<String, f64>,
}

pub fn infraction_penalty(events: &[InfractionEvent], coefficients: &InfractionCoefficients) -> f64 {
    events
        .iter()
        .map(|e| e.kind.coefficient(coefficients))
        .product::<f64>()
        .clamp(0.0, 1.0)
}

pub fn per_km(events: &[InfractionEvent], distance_driven: f64) -> BTreeMap<String, f64> {
    let km = distance_driven / 1000.0;
    InfractionKind::ALL
        .iter()
        .map(|k| {
            let n = events.iter().filter(|e| e.kind == *k).count() as f64;
            let rate = if n == 0.0 { 0.0 } else if km > 0.0 { n / km } else { f64::INFINITY };
            (k.as_str().to_string(), rate)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn compute_metrics(
    route_length: f64,
    distance_completed: f64,
    events: Vec<InfractionEvent>,
    coefficients: &InfractionCoefficients,
    termination: Termination,
    distance_driven: f64,
    duration: f64,
) -> MetricsReport {
    let route_completion = if route_length > 0.0 {
        (100.0 * distance_completed / route_length).clamp(0.0, 100.0)
    } else {
        100.0
    };
    let infraction_penalty = infraction_penalty(&events, coefficients);
    MetricsReport {
        route_completion,
        infraction_penalty,
        driving_score: route_completion * infraction_penalty,
        infractions_per_km: per_km(&events, distance_driven),
        infraction_events: events,
        termination,
        route_length,
        distance_driven,
        duration,
    }
}

/// Means over several routes, in the column layout of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub routes: usize,
    pub driving_score: f64,
    pub route_completion: f64,
    pub infraction_penalty: f64,
    pub distance_driven: f64,
    /// Events per kilometer over the total distance driven, by type.
    pub infractions_per_km: BTreeMap<String, f64>,
}

pub fn aggregate(reports: &[MetricsReport]) -> Option<AggregateReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let distance: f64 = reports.iter().map(|r| r.distance_driven).sum();
    let all_events: Vec<InfractionEvent> = reports.iter().flat_map(|r| r.infraction_events.iter().cloned()).collect();
    Some(AggregateReport {
        routes: reports.len(),
        driving_score: mean(|r| r.driving_score),
        route_completion: mean(|r| r.route_completion),
        infraction_penalty: mean(|r| r.infraction_penalty),
        distance_driven: distance,
        infractions_per_km: per_km(&all_events, distance),
    })
}
