//! Per-frame augmentation statistics and their aggregation.
//!
//! Stats text (deterministic, one file per frame):
//!
//! ```text
//! frame <id>
//! candidates <n>
//! accepted <n>
//! rejected no-feasible-column <n>
//! rejected all-collide <n>
//! rate <insert_id> <r>
//! <occlusion report lines>
//! ```
//!
//! Timings live in a separate file, `<stage> <seconds>` per line, since they
//! differ between runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Duration;

use crate::occlusion::{OcclusionError, OcclusionReport};
use crate::placement::RejectReason;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameStats {
    pub frame_id: String,
    pub candidates: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<RejectReason, usize>,
    /// Feasibility rate of each accepted object, by insertion id.
    pub rates: Vec<(u32, f64)>,
    pub occlusion: OcclusionReport,
    pub timings: Vec<(String, Duration)>,
}

impl FrameStats {
    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "frame {}", self.frame_id);
        let _ = writeln!(s, "candidates {}", self.candidates);
        let _ = writeln!(s, "accepted {}", self.accepted);
        for reason in [RejectReason::NoFeasibleColumn, RejectReason::AllCollide] {
            let _ = writeln!(s, "rejected {reason} {}", self.rejected.get(&reason).copied().unwrap_or(0));
        }
        for (id, r) in &self.rates {
            let _ = writeln!(s, "rate {id} {r}");
        }
        s + &self.occlusion.to_text()
    }

    pub fn timings_text(&self) -> String {
        self.timings.iter().map(|(k, d)| format!("{k} {:.9}\n", d.as_secs_f64())).collect()
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut st = FrameStats::default();
        let mut rest = String::new();
        for (n, line) in text.lines().enumerate() {
            let bad = |m: &str| format!("line {}: {m}", n + 1);
            let toks: Vec<&str> = line.split_whitespace().collect();
            let int = |t: &str| t.parse::<usize>().map_err(|_| bad("expected an integer"));
            match toks.as_slice() {
                ["frame", id] => st.frame_id = id.to_string(),
                ["candidates", c] => st.candidates = int(c)?,
                ["accepted", c] => st.accepted = int(c)?,
                ["rejected", reason, c] => {
                    let reason = match *reason {
                        "no-feasible-column" => RejectReason::NoFeasibleColumn,
                        "all-collide" => RejectReason::AllCollide,
                        _ => return Err(bad("unknown rejection reason")),
                    };
                    st.rejected.insert(reason, int(c)?);
                }
                ["rate", id, r] => {
                    let id = id.parse().map_err(|_| bad("bad id"))?;
                    let r: f64 = r.parse().map_err(|_| bad("bad rate"))?;
                    if !(0.0..=1.0).contains(&r) {
                        return Err(bad("rate outside [0, 1]"));
                    }
                    st.rates.push((id, r));
                }
                _ => {
                    rest.push_str(line);
                    rest.push('\n');
                }
            }
        }
        st.occlusion = OcclusionReport::parse(&rest).map_err(|e: OcclusionError| e.to_string())?;
        if st.accepted + st.rejected_total() != st.candidates {
            return Err("accepted + rejected does not equal candidates".into());
        }
        Ok(st)
    }

    pub fn parse_timings(text: &str) -> Result<Vec<(String, Duration)>, String> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let (k, v) = l.split_once(' ').ok_or_else(|| format!("bad timing line `{l}`"))?;
                let secs: f64 = v.trim().parse().map_err(|_| format!("bad timing value `{v}`"))?;
                Duration::try_from_secs_f64(secs).map(|d| (k.to_string(), d)).map_err(|e| e.to_string())
            })
            .collect()
    }
}

const BINS: usize = 10;

/// Ten equal bins over [0, 1]; 1.0 falls in the last bin.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Histogram {
    pub counts: [usize; BINS],
}

impl Histogram {
    pub fn add(&mut self, x: f64) {
        let b = ((x.clamp(0.0, 1.0) * BINS as f64) as usize).min(BINS - 1);
        self.counts[b] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatsSummary {
    pub frames: usize,
    pub candidates: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<RejectReason, usize>,
    pub rates: Histogram,
    pub visible_fraction: Histogram,
    pub objects: usize,
    pub dropped: usize,
    pub deleted_background: usize,
    /// Stage name to per-frame durations.
    pub timings: BTreeMap<String, Vec<Duration>>,
}

impl StatsSummary {
    pub fn add(&mut self, st: &FrameStats) {
        self.frames += 1;
        self.candidates += st.candidates;
        self.accepted += st.accepted;
        for (r, c) in &st.rejected {
            *self.rejected.entry(*r).or_default() += c;
        }
        for &(_, r) in &st.rates {
            self.rates.add(r);
        }
        for o in &st.occlusion.objects {
            self.objects += 1;
            self.dropped += o.dropped as usize;
            self.visible_fraction.add(o.visible_fraction());
        }
        self.deleted_background += st.occlusion.deleted_background.len();
        for (k, d) in &st.timings {
            self.timings.entry(k.clone()).or_default().push(*d);
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.candidates == 0 {
            0.0
        } else {
            self.accepted as f64 / self.candidates as f64
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "frames {}", self.frames);
        let _ = writeln!(s, "candidates {}", self.candidates);
        let _ = writeln!(s, "accepted {} ({:.1}%)", self.accepted, 100.0 * self.acceptance_rate());
        for (r, c) in &self.rejected {
            let _ = writeln!(s, "rejected {r} {c}");
        }
        let _ = writeln!(s, "inserted objects {} dropped {}", self.objects, self.dropped);
        let _ = writeln!(s, "deleted background points {}", self.deleted_background);
        for (name, h) in [("feasibility rate", &self.rates), ("visible fraction", &self.visible_fraction)] {
            let _ = writeln!(s, "{name} histogram ({} values)", h.total());
            for (i, c) in h.counts.iter().enumerate() {
                let _ = writeln!(s, "  [{:.1}, {:.1}{} {c}", i as f64 / 10.0, (i + 1) as f64 / 10.0, if i == BINS - 1 { "]" } else { ")" });
            }
        }
        for (k, ds) in &self.timings {
            let mut v: Vec<f64> = ds.iter().map(|d| d.as_secs_f64() * 1e3).collect();
            v.sort_by(f64::total_cmp);
            let _ = writeln!(s, "timing {k} median {:.3} ms max {:.3} ms", v[v.len() / 2], v[v.len() - 1]);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::occlusion::{ObjectRetention, Strategy};

    fn sample() -> FrameStats {
        FrameStats {
            frame_id: "000007".into(),
            candidates: 3,
            accepted: 2,
            rejected: [(RejectReason::AllCollide, 1)].into_iter().collect(),
            rates: vec![(0, 1.0), (1, 0.85)],
            occlusion: OcclusionReport {
                strategy: Strategy::Culling,
                objects: vec![ObjectRetention { id: 0, original: 10, visible: 2, retained: 0, dropped: true }],
                deleted_background: vec![4, 9],
            },
            timings: vec![],
        }
    }

    #[test]
    fn text_round_trip() {
        let st = sample();
        let mut back = FrameStats::parse(&st.to_text()).unwrap();
        back.rejected.retain(|_, c| *c > 0);
        assert_eq!(back, st);
    }

    #[test]
    fn inconsistent_counts_rejected() {
        let text = sample().to_text().replace("candidates 3", "candidates 4");
        assert!(FrameStats::parse(&text).is_err());
    }

    #[test]
    fn summary_and_histogram() {
        let mut sum = StatsSummary::default();
        sum.add(&sample());
        sum.add(&sample());
        assert_eq!(sum.accepted, 4);
        assert_eq!(sum.dropped, 2);
        assert_eq!(sum.rates.counts[9], 2);
        assert_eq!(sum.rates.counts[8], 2);
        assert!(sum.to_text().contains("frames 2"));
    }
}
