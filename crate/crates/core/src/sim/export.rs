use std::io::Write;

use super::trajectory::Trajectory;
use super::SimError;

fn io_err(e: impl std::fmt::Display) -> SimError {
    SimError::InvalidParameter(format!("write failed: {e}"))
}

/// Long-format snapshot table: `time,server_id,queue_len`.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "server_id", "queue_len"]).map_err(io_err)?;
    for (i, t) in traj.sample_times.iter().enumerate() {
        for (server, q) in traj.queue_lengths.iter().enumerate() {
            w.write_record([t.to_string(), server.to_string(), q[i].to_string()])
                .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Event log as `time,kind,node,server,dest`; `dest` is empty for swaps.
pub fn write_event_log_csv<W: Write>(traj: &Trajectory, out: W) -> Result<(), SimError> {
    let events = traj.events.as_ref().ok_or(SimError::NoEventLog)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "kind", "node", "server", "dest"]).map_err(io_err)?;
    for ev in events {
        let dest = ev.destination().map(|d| d.to_string()).unwrap_or_default();
        w.write_record([
            ev.time.to_string(),
            ev.kind.as_str().to_string(),
            ev.node.to_string(),
            ev.server.to_string(),
            dest,
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphTopology;
    use crate::sim::{simulate, Horizon, NetworkState, SimConfig};

    #[test]
    fn trajectory_and_event_tables() {
        let mut cfg = SimConfig::new(GraphTopology::cycle(5).unwrap(), 0.5, 1.0)
            .with_horizon(Horizon::Time(3.0));
        cfg.record_events = true;
        let g = cfg.topology.clone();
        let t = simulate(&cfg, NetworkState::empty(&g, 1)).unwrap();

        let mut buf = Vec::new();
        write_trajectory_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("time,server_id,queue_len"));
        assert_eq!(lines.count(), 4 * 5);

        let mut buf = Vec::new();
        write_event_log_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,kind,node,server,dest\n"));
        assert_eq!(text.lines().count(), 1 + t.events.as_ref().unwrap().len());
    }

    #[test]
    fn event_log_required() {
        let cfg = SimConfig::new(GraphTopology::cycle(5).unwrap(), 0.5, 1.0)
            .with_horizon(Horizon::Time(1.0));
        let g = cfg.topology.clone();
        let t = simulate(&cfg, NetworkState::empty(&g, 1)).unwrap();
        assert_eq!(write_event_log_csv(&t, Vec::new()).unwrap_err(), SimError::NoEventLog);
    }
}
