//! Per-round training metrics and their CSV contract.

use std::io::Write;

/// Per-client slice of a metrics row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientRoundMetrics {
    /// Cumulative payload bits sent through this round.
    pub cum_payload_bits: u64,
    pub eps_total_exact: f64,
    pub eps_total_simplified: f64,
    pub delta_total: f64,
}

/// One row per round: objective state, aggregate gradient second moment,
/// and per-client communication/privacy totals.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub round: u64,
    /// F(theta_t) before the round's update.
    pub loss: f64,
    /// ||grad F(theta_t)||^2, refreshed on the evaluation cadence.
    pub grad_norm_sq: f64,
    /// ||g_bar_t||^2, the measured counterpart of the aggregated-gradient
    /// second-moment bound.
    pub agg_second_moment: f64,
    pub per_client: Vec<ClientRoundMetrics>,
}

pub const METRICS_SCHEMA: &str = "# bqsgd-metrics v1";

/// Frozen column contract; floats use Rust's shortest round-trip formatting
/// so byte-identical output means numerically identical runs.
pub fn write_metrics_csv<W: Write>(mut out: W, rows: &[MetricsRow]) -> std::io::Result<()> {
    writeln!(out, "{METRICS_SCHEMA}")?;
    let clients = rows.first().map_or(0, |r| r.per_client.len());
    let mut header = String::from("round,loss,grad_norm_sq,agg_second_moment");
    for c in 0..clients {
        header.push_str(&format!(
            ",bits_c{c},eps_exact_c{c},eps_simpl_c{c},delta_c{c}"
        ));
    }
    writeln!(out, "{header}")?;
    for row in rows {
        let mut line = format!(
            "{},{},{},{}",
            row.round, row.loss, row.grad_norm_sq, row.agg_second_moment
        );
        for c in &row.per_client {
            line.push_str(&format!(
                ",{},{},{},{}",
                c.cum_payload_bits, c.eps_total_exact, c.eps_total_simplified, c.delta_total
            ));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout_is_stable() {
        let rows = vec![MetricsRow {
            round: 0,
            loss: 1.5,
            grad_norm_sq: 0.25,
            agg_second_moment: 0.5,
            per_client: vec![
                ClientRoundMetrics {
                    cum_payload_bits: 240,
                    eps_total_exact: 2.0,
                    eps_total_simplified: 1.0,
                    delta_total: 1e-4,
                },
                ClientRoundMetrics {
                    cum_payload_bits: 240,
                    eps_total_exact: f64::INFINITY,
                    eps_total_simplified: f64::INFINITY,
                    delta_total: 1e-4,
                },
            ],
        }];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# bqsgd-metrics v1");
        assert_eq!(
            lines[1],
            "round,loss,grad_norm_sq,agg_second_moment,\
             bits_c0,eps_exact_c0,eps_simpl_c0,delta_c0,\
             bits_c1,eps_exact_c1,eps_simpl_c1,delta_c1"
        );
        assert_eq!(lines[2], "0,1.5,0.25,0.5,240,2,1,0.0001,240,inf,inf,0.0001");
    }
}
