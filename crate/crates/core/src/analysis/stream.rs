//! Streaming reducers for runs too long to keep every tag.

use crate::chip::Channel;
use crate::montecarlo::{TagSink, TimeTag};
use crate::Result;

/// Singles per channel, optionally only inside the pulse gates.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ChannelCounter {
    pub counts: [u64; 4],
    /// (period, half-width) in ps.
    gate: Option<(f64, f64)>,
}

impl ChannelCounter {
    /// Counts only clicks within `window_ps` of a pulse arrival time.
    pub fn gated(period_ps: f64, window_ps: u64) -> Self {
        ChannelCounter {
            counts: [0; 4],
            gate: Some((period_ps, window_ps as f64)),
        }
    }

    pub fn count(&self, channel: Channel) -> u64 {
        self.counts[channel.index()]
    }
}

impl TagSink for ChannelCounter {
    fn accept(&mut self, tags: &[TimeTag]) -> Result<()> {
        for t in tags {
            if let Some((period, half)) = self.gate {
                let x = t.time_ps as f64;
                if (x - (x / period).round() * period).abs() > half {
                    continue;
                }
            }
            self.counts[t.channel.index()] += 1;
        }
        Ok(())
    }
}

/// Keeps only clusters of tags (consecutive gaps ≤ window) that involve
/// at least two distinct channels. Coincidence counts whose channels
/// come in groups of two or more clicking together are unchanged by
/// this filter.
#[derive(Debug, Clone, Default)]
pub struct ClusterFilter {
    window_ps: u64,
    cluster: Vec<TimeTag>,
    kept: Vec<TimeTag>,
}

impl ClusterFilter {
    pub fn new(window_ps: u64) -> Self {
        ClusterFilter {
            window_ps,
            ..Default::default()
        }
    }

    fn close_cluster(&mut self) {
        let mut seen = 0u8;
        for t in &self.cluster {
            seen |= 1 << t.channel.index();
        }
        if seen.count_ones() >= 2 {
            self.kept.append(&mut self.cluster);
        } else {
            self.cluster.clear();
        }
    }

    /// Kept tags, in time order.
    pub fn finish(mut self) -> Vec<TimeTag> {
        self.close_cluster();
        self.kept
    }
}

impl TagSink for ClusterFilter {
    fn accept(&mut self, tags: &[TimeTag]) -> Result<()> {
        for &t in tags {
            if let Some(last) = self.cluster.last() {
                if t.time_ps.saturating_sub(last.time_ps) > self.window_ps {
                    self.close_cluster();
                }
            }
            self.cluster.push(t);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_only_multichannel_clusters() {
        use Channel::*;
        let tags = [
            (H1, 0),
            (S1, 500),
            (H1, 10_000),
            (H1, 10_400),
            (S2, 50_000),
            (H2, 50_900),
            (S1, 51_800),
        ]
        .map(|(c, t)| TimeTag::new(c, t));
        let mut f = ClusterFilter::new(1000);
        f.accept(&tags[..3]).unwrap();
        f.accept(&tags[3..]).unwrap();
        let kept: Vec<u64> = f.finish().iter().map(|t| t.time_ps).collect();
        assert_eq!(kept, vec![0, 500, 50_000, 50_900, 51_800]);
        let mut c = ChannelCounter::default();
        c.accept(&tags).unwrap();
        assert_eq!(c.count(H1), 3);
        let mut g = ChannelCounter::gated(10_000.0, 450);
        g.accept(&tags).unwrap();
        assert_eq!((g.count(H1), g.count(S1), g.count(S2)), (3, 0, 1));
    }
}
