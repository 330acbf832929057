use std::io::Write;

use super::PiecewiseTrajectory;

/// Writes `t,x1..xd,zone_id` rows at every accepted step node.
pub fn write_trajectory_csv<W: Write>(traj: &PiecewiseTrajectory, out: W) -> csv::Result<()> {
    let d = traj.dimension;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.push("zone_id".into());
    w.write_record(&header)?;
    for (t, zone, state) in traj.step_nodes() {
        let mut row = vec![format!("{t:?}")];
        row.extend(state[..d].iter().map(|v| format!("{v:?}")));
        row.push(zone.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one row per recorded event.
pub fn write_events_csv<W: Write>(traj: &PiecewiseTrajectory, out: W) -> csv::Result<()> {
    let d = traj.dimension;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend(
        ["surface", "from_zone", "to_zone", "kind", "w_minus", "w_plus"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for e in &traj.events {
        let mut row = vec![format!("{:?}", e.t)];
        row.extend(e.state.iter().map(|v| format!("{v:?}")));
        row.push(e.surface.to_string());
        row.push(e.from_zone.to_string());
        row.push(e.to_zone.to_string());
        row.push(e.kind.as_str().to_string());
        row.push(format!("{:?}", e.w_minus));
        row.push(format!("{:?}", e.w_plus));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{integrate, IntegratorConfig};
    use crate::model::{builtin_proposition1, Prop1Coeffs};

    #[test]
    fn csv_round_trips_values() {
        let m = builtin_proposition1(&Prop1Coeffs::pinned());
        let traj = integrate(&m, &[1.0, 0.0, 0.0], 0.01, (0.0, 7.0), &IntegratorConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        assert_eq!(rdr.headers().unwrap(), vec!["t", "x1", "x2", "x3", "zone_id"]);
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        let last = rows.last().unwrap();
        assert_eq!(last[0].parse::<f64>().unwrap(), 7.0);
        assert_eq!(last[1].parse::<f64>().unwrap(), traj.final_base()[0]);

        let mut buf = Vec::new();
        write_events_csv(&traj, &mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), traj.events.len());
        assert_eq!(&rows[0][7], "crossing");
        assert_eq!(rows[0][0].parse::<f64>().unwrap(), traj.events[0].t);
    }
}
