//! MQM score aggregation and a consistency probe of the normalization.
//!
//! The score is `100 * (1 - W / (norm * segments))` with severity weights
//! 1/5/10. Given severity counts and reported scores from an annotation
//! study whose segment count is unknown, `implied_segments` recovers the
//! count each row would need under the default norm of 25. If one fixed
//! formula produced the scores, every row of a column would imply the same
//! count.

use qad::report::{implied_segments, mqm_score, MqmCounts, DEFAULT_MQM_NORM};

fn main() {
    let counts = MqmCounts {
        minor: 12,
        major: 3,
        critical: 1,
        num_segments: 10,
    };
    println!(
        "W = {}, score = {:.2}\n",
        counts.weighted(),
        mqm_score(&counts, DEFAULT_MQM_NORM).expect("score")
    );

    // (system, minor, major, critical, reported score), two language pairs.
    let columns = [
        (
            "EN-DE",
            [
                ("reference", 24, 67, 0, 97.04),
                ("baseline", 8, 139, 0, 95.66),
                ("F-RR COMET-QE", 15, 204, 0, 93.47),
                ("T-RR COMET", 12, 109, 0, 96.20),
                ("MBR COMET", 11, 161, 0, 94.38),
                ("T-RR+MBR COMET", 10, 138, 0, 95.44),
            ],
        ),
        (
            "EN-RU",
            [
                ("reference", 5, 11, 0, 99.30),
                ("baseline", 17, 239, 49, 79.78),
                ("F-RR COMET-QE", 13, 254, 80, 76.25),
                ("T-RR COMET", 9, 141, 45, 85.97),
                ("MBR COMET", 8, 182, 40, 83.65),
                ("T-RR+MBR COMET", 11, 134, 45, 86.78),
            ],
        ),
    ];
    for (pair, rows) in columns {
        println!(
            "{pair}: {:<16} {:>6} {:>8} {:>10}",
            "system", "W", "reported", "implied S"
        );
        for (name, minor, major, critical, score) in rows {
            let c = MqmCounts {
                minor,
                major,
                critical,
                num_segments: 1,
            };
            let s = implied_segments(c.weighted(), score, DEFAULT_MQM_NORM);
            println!(
                "       {name:<16} {:>6} {score:>8.2} {s:>10.1}",
                c.weighted()
            );
        }
        println!();
    }
}
