//! gnuplot script drawing `V(t)` and `‖u‖²(t)` for a set of telemetry files.

use std::fmt::Write as _;

use crate::telemetry::Dims;

/// Script that renders `comparison.png` next to the CSV files. `files` pairs
/// each run label with its CSV file name, relative to the script.
pub fn comparison_script(dims: Dims, files: &[(String, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Usage: gnuplot plot.gp (run from this directory)");
    let _ = writeln!(s, "set terminal pngcairo size 1000,800");
    let _ = writeln!(s, "set output 'comparison.png'");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key outside right");
    let _ = writeln!(s, "set grid");
    let _ = writeln!(s, "set multiplot layout 2,1");

    let series = |expr: &str| {
        files
            .iter()
            .map(|(label, file)| format!("'{file}' skip 1 using 1:{expr} with lines title '{}'", label.replace('_', "\\_")))
            .collect::<Vec<_>>()
            .join(", \\\n     ")
    };

    let _ = writeln!(s, "\nset title 'Lyapunov function'");
    let _ = writeln!(s, "set ylabel 'V'");
    let _ = writeln!(s, "set logscale y");
    let _ = writeln!(s, "plot {}", series(&dims.v_column().to_string()));

    let u_sq = (0..dims.n_u)
        .map(|k| format!("(${})**2", dims.u_column() + k))
        .collect::<Vec<_>>()
        .join(" + ");
    let _ = writeln!(s, "\nset title 'Control effort'");
    let _ = writeln!(s, "set ylabel '|u|^2'");
    let _ = writeln!(s, "set xlabel 't [s]'");
    let _ = writeln!(s, "unset logscale y");
    let _ = writeln!(s, "plot {}", series(&format!("({u_sq})")));
    let _ = writeln!(s, "\nunset multiplot");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_references_every_file_and_both_panels() {
        let dims = Dims { n_q: 2, n_u: 2, n_lambda: 0 };
        let files = vec![("id_qp".to_string(), "id_qp.csv".to_string()), ("fbl".to_string(), "fbl.csv".to_string())];
        let s = comparison_script(dims, &files);
        assert_eq!(s.matches("'id_qp.csv'").count(), 2);
        assert_eq!(s.matches("'fbl.csv'").count(), 2);
        assert!(s.contains("using 1:8 "));
        assert!(s.contains("using 1:(($6)**2 + ($7)**2) "));
        assert!(s.contains("set multiplot layout 2,1"));
    }
}
