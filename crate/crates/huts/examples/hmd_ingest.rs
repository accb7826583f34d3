//! Parsing HMD-format 1x1 tables and assembling a pooled log-rate surface.

use std::io::Cursor;

use huts::hmd::{
    build_surface, parse_hmd_table, to_log_surface, CountryConfig, Sex,
    TableKind,
};

fn main() {
    // A miniature Mx file in the HMD layout: title line, blank line,
    // column header, then year/age/female/male/total rows. "." marks a
    // missing value and a trailing "+" an open age group.
    let mx_text = "\
Example, Death rates (period 1x1)

  Year          Age      Female        Male       Total
  2000           0     0.005201    0.006402    0.005801
  2000           1     0.000402    0.000511    0.000455
  2000           2     0.000301    0.000384    0.000344
  2000           3+    0.021110    0.028903    0.024800
  2001           0     0.005100    0.006300    0.005700
  2001           1     .           0.000500    0.000450
  2001           2     0.000295    0.000380    0.000340
  2001           3+    0.020900    0.028500    0.024500
";

    let table =
        parse_hmd_table(Cursor::new(mx_text), TableKind::DeathRates).unwrap();
    println!(
        "parsed {} rows covering years {:?}",
        table.rows.len(),
        table.year_range().unwrap()
    );

    let cfg = CountryConfig {
        code: "EXA".into(),
        commencing_year: 2000,
        end_year: 2001,
        max_age: 2,
        sex: Sex::Total,
    };
    let surface = build_surface(&table, None, None, &cfg).unwrap();
    println!(
        "surface: {} ages x {} years, open group pooled approximately: {}",
        surface.n_ages(),
        surface.n_years(),
        surface.approximate_pooling
    );

    let log = to_log_surface(&surface).unwrap();
    println!("imputation constant: {}", log.imputation_constant);
    for (ai, &age) in log.ages.iter().enumerate() {
        let row: Vec<String> = (0..log.n_years())
            .map(|yi| format!("{:8.4}", log.value(ai, yi)))
            .collect();
        println!("age {age}: {}", row.join(" "));
    }
}
