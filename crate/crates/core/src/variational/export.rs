use std::io::Write;

use super::{FirstOrderResponse, FundamentalMatrix};

/// Writes `t,y1_1..y1_d` at every step node.
pub fn write_response_csv<W: Write>(resp: &FirstOrderResponse, out: W) -> csv::Result<()> {
    let d = resp.trajectory.dimension;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("y1_{i}")));
    w.write_record(&header)?;
    for (t, y) in resp.samples() {
        let mut row = vec![format!("{t:?}")];
        row.extend(y.iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `t,Y11,Y12,..,Ydd` (row-major) at every step node.
pub fn write_matrix_csv<W: Write>(fm: &FundamentalMatrix, out: W) -> csv::Result<()> {
    let d = fm.trajectory.dimension;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    for i in 1..=d {
        header.extend((1..=d).map(|j| format!("Y{i}{j}")));
    }
    w.write_record(&header)?;
    for (t, y) in fm.samples() {
        let mut row = vec![format!("{t:?}")];
        for i in 0..d {
            row.extend((0..d).map(|j| format!("{:?}", y[(i, j)])));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
