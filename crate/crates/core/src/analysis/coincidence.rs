//! n-fold coincidence counting, pulse-offset histograms and g²(0).

use serde::Serialize;

use crate::chip::Channel;
use crate::montecarlo::{first_unsorted, TagStream};
use crate::{Error, Result};

pub const DEFAULT_WINDOW_PS: u64 = 1000;

/// Which channels must click together, and how.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceSpec {
    pub channels: Vec<Channel>,
    /// Channels moved back by `offset · period` before matching, so that a
    /// click `offset` pulses later lines up with the others.
    pub shifted: Vec<Channel>,
    /// Half-width of the coincidence window: `|Δt| ≤ window_ps`.
    pub window_ps: u64,
    pub pulse_offsets: Vec<i64>,
    pub period_ps: f64,
}

impl CoincidenceSpec {
    /// Same-pulse coincidence of `channels`.
    pub fn simultaneous(channels: &[Channel], window_ps: u64, period_ps: f64) -> Self {
        CoincidenceSpec {
            channels: channels.to_vec(),
            shifted: Vec::new(),
            window_ps,
            pulse_offsets: vec![0],
            period_ps,
        }
    }

    pub fn fourfold(window_ps: u64, period_ps: f64) -> Self {
        Self::simultaneous(&Channel::ALL, window_ps, period_ps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::domain("coincidence needs at least one channel"));
        }
        if self.window_ps == 0 {
            return Err(Error::domain("coincidence window must be positive"));
        }
        let mut seen = [false; 4];
        for ch in &self.channels {
            if std::mem::replace(&mut seen[ch.index()], true) {
                return Err(Error::domain(format!("channel {ch} listed twice")));
            }
        }
        if let Some(ch) = self.shifted.iter().find(|c| !self.channels.contains(c)) {
            return Err(Error::domain(format!(
                "shifted channel {ch} is not counted"
            )));
        }
        if !(self.period_ps > 0.0) && self.pulse_offsets.iter().any(|&o| o != 0) {
            return Err(Error::domain("pulse offsets need a positive period"));
        }
        Ok(())
    }
}

fn channel_times(stream: &TagStream) -> Result<[Vec<i64>; 4]> {
    if let Some(index) = first_unsorted(stream.tags()) {
        return Err(Error::Unsorted { index });
    }
    let mut times: [Vec<i64>; 4] = Default::default();
    for t in stream.tags() {
        times[t.channel.index()].push(t.time_ps as i64);
    }
    Ok(times)
}

/// Reference clicks (of the first listed channel) that have a partner on
/// every other listed channel within the window. Linear in the number of
/// tags: each channel keeps a cursor that only moves forward.
fn count_matched(lists: &[(&[i64], i64)], window: i64) -> u64 {
    let (reference, ref_shift) = lists[0];
    let others = &lists[1..];
    let mut cursors = vec![0usize; others.len()];
    let mut count = 0;
    'tags: for &t in reference {
        let t = t - ref_shift;
        for (k, &(list, shift)) in others.iter().enumerate() {
            let c = &mut cursors[k];
            while *c < list.len() && list[*c] - shift < t - window {
                *c += 1;
            }
            if *c >= list.len() || list[*c] - shift > t + window {
                continue 'tags;
            }
        }
        count += 1;
    }
    count
}

/// Coincidence count for each requested pulse offset, in order.
pub fn count_nfold(stream: &TagStream, spec: &CoincidenceSpec) -> Result<Vec<(i64, u64)>> {
    spec.validate()?;
    let times = channel_times(stream)?;
    Ok(spec
        .pulse_offsets
        .iter()
        .map(|&offset| {
            let shift = (offset as f64 * spec.period_ps).round() as i64;
            let lists: Vec<(&[i64], i64)> = spec
                .channels
                .iter()
                .map(|ch| {
                    let s = if spec.shifted.contains(ch) { shift } else { 0 };
                    (times[ch.index()].as_slice(), s)
                })
                .collect();
            (offset, count_matched(&lists, spec.window_ps as i64))
        })
        .collect())
}

/// One bin of the pulse-offset four-fold histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OffsetBin {
    pub offset: i64,
    /// H1 ∧ H2 ∧ S1 ∧ S2, with the second pair `offset` pulses later.
    pub fourfold: u64,
    /// Both heralds with an arm click in each herald's pulse, whichever
    /// arm; at offset 0 this is H1 ∧ H2 ∧ (S1 ∨ S2).
    pub herald_pair_any_arm: u64,
}

/// Four-fold counts against the pulse separation between the two pairs.
///
/// At offset 0 all four clicks share a pulse. At offset n the pair from
/// source 2 (H2 and one arm) is taken n pulses after the pair from source
/// 1; both arm assignments are summed, so the count does not depend on
/// which output each photon left from.
pub fn fourfold_histogram(
    stream: &TagStream,
    max_offset: u32,
    window_ps: u64,
    period_ps: f64,
) -> Result<Vec<OffsetBin>> {
    use Channel::*;
    if window_ps == 0 || !(period_ps > 0.0) {
        return Err(Error::domain(
            "histogram needs a positive window and period",
        ));
    }
    let times = channel_times(stream)?;
    let window = window_ps as i64;
    let count = |groups: &[(Channel, i64)]| -> u64 {
        let lists: Vec<(&[i64], i64)> = groups
            .iter()
            .map(|&(c, s)| (times[c.index()].as_slice(), s))
            .collect();
        count_matched(&lists, window)
    };
    let mut bins = Vec::new();
    for n in -(max_offset as i64)..=(max_offset as i64) {
        let bin = if n == 0 {
            let fourfold = count(&[(H1, 0), (S1, 0), (S2, 0), (H2, 0)]);
            let with_s1 = count(&[(H1, 0), (S1, 0), (H2, 0)]);
            let with_s2 = count(&[(H1, 0), (S2, 0), (H2, 0)]);
            OffsetBin {
                offset: 0,
                fourfold,
                herald_pair_any_arm: with_s1 + with_s2 - fourfold,
            }
        } else {
            let shift = (n as f64 * period_ps).round() as i64;
            let pairs = |a: Channel, b: Channel| count(&[(H1, 0), (a, 0), (H2, shift), (b, shift)]);
            let crossed = pairs(S1, S2) + pairs(S2, S1);
            OffsetBin {
                offset: n,
                fourfold: crossed,
                herald_pair_any_arm: crossed + pairs(S1, S1) + pairs(S2, S2),
            }
        };
        bins.push(bin);
    }
    Ok(bins)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct G2Estimate {
    pub g2: f64,
    pub stderr: f64,
    pub coincidences: u64,
    pub singles_a: u64,
    pub singles_b: u64,
    pub pulses: u64,
}

/// Zero-delay g²(0) = C₀·N / (S_A·S_B), with Poisson error propagation.
pub fn g2_from_counts(
    coincidences: u64,
    singles_a: u64,
    singles_b: u64,
    pulses: u64,
) -> Result<G2Estimate> {
    if pulses == 0 {
        return Err(Error::Undefined("no pulses recorded".into()));
    }
    if singles_a == 0 || singles_b == 0 {
        return Err(Error::Undefined("a channel has no singles".into()));
    }
    let scale = pulses as f64 / (singles_a as f64 * singles_b as f64);
    let g2 = coincidences as f64 * scale;
    let rel2 = 1.0 / singles_a as f64 + 1.0 / singles_b as f64;
    let stderr = if coincidences == 0 {
        scale
    } else {
        g2 * (1.0 / coincidences as f64 + rel2).sqrt()
    };
    Ok(G2Estimate {
        g2,
        stderr,
        coincidences,
        singles_a,
        singles_b,
        pulses,
    })
}

/// g²(0) between channels `a` and `b` over `stream.meta.pulses` pulses.
pub fn g2_hbt(
    stream: &TagStream,
    a: Channel,
    b: Channel,
    window_ps: u64,
    period_ps: f64,
) -> Result<G2Estimate> {
    if a == b {
        return Err(Error::domain("g2 needs two distinct channels"));
    }
    let (sa, sb) = (stream.count(a) as u64, stream.count(b) as u64);
    if sa == 0 || sb == 0 {
        return Err(Error::Undefined(format!(
            "no singles on {}",
            if sa == 0 { a } else { b }
        )));
    }
    let c0 = count_nfold(
        stream,
        &CoincidenceSpec::simultaneous(&[a, b], window_ps, period_ps),
    )?[0]
        .1;
    g2_from_counts(c0, sa, sb, stream.meta.pulses)
}

/// Four-fold count of a run with deliberately mismatched herald filters:
/// every coincidence in it is accidental.
pub fn accidental_estimate(stream_mismatched: &TagStream, spec: &CoincidenceSpec) -> Result<u64> {
    Ok(count_nfold(stream_mismatched, spec)?
        .iter()
        .map(|(_, c)| c)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::{StreamMeta, TimeTag};
    use proptest::prelude::*;

    const PERIOD: f64 = 13_071.895;

    fn stream(tags: &[(Channel, u64)]) -> TagStream {
        TagStream::from_unsorted(
            StreamMeta::default(),
            tags.iter().map(|&(c, t)| TimeTag::new(c, t)).collect(),
        )
    }

    #[test]
    fn constructed_fourfold() {
        use Channel::*;
        let s = stream(&[(H1, 0), (H2, 5), (S1, 8), (S2, 9)]);
        let wide = CoincidenceSpec::fourfold(1000, PERIOD);
        assert_eq!(count_nfold(&s, &wide).unwrap(), vec![(0, 1)]);
        let narrow = CoincidenceSpec::fourfold(3, PERIOD);
        assert_eq!(count_nfold(&s, &narrow).unwrap(), vec![(0, 0)]);
    }

    #[test]
    fn rejects_bad_specs() {
        let raw = stream(&[(Channel::H1, 5)]);
        assert!(count_nfold(&raw, &CoincidenceSpec::fourfold(0, PERIOD)).is_err());
        assert!(count_nfold(&raw, &CoincidenceSpec::simultaneous(&[], 10, PERIOD)).is_err());
        let dup = CoincidenceSpec::simultaneous(&[Channel::H1, Channel::H1], 10, PERIOD);
        assert!(count_nfold(&raw, &dup).is_err());
    }

    #[test]
    fn offset_histogram_pairs_clicks_across_pulses() {
        use Channel::*;
        // Source 1 at pulse 10, source 2 three pulses later, in both arm orders.
        let p = |n: u64| (n as f64 * PERIOD).round() as u64;
        let s = stream(&[
            (H1, p(10)),
            (S1, p(10)),
            (H2, p(13)),
            (S2, p(13)),
            (H1, p(50)),
            (S2, p(50)),
            (H2, p(53)),
            (S1, p(53)),
        ]);
        let bins = fourfold_histogram(&s, 4, 1000, PERIOD).unwrap();
        let at = |n: i64| bins.iter().find(|b| b.offset == n).unwrap().fourfold;
        assert_eq!(at(3), 2);
        assert_eq!(at(0), 0);
        assert_eq!(at(-3), 0);
        assert_eq!(
            bins.iter()
                .find(|b| b.offset == 3)
                .unwrap()
                .herald_pair_any_arm,
            2
        );
    }

    #[test]
    fn g2_requires_singles() {
        let mut s = stream(&[(Channel::S1, 10)]);
        s.meta.pulses = 100;
        assert!(matches!(
            g2_hbt(&s, Channel::S1, Channel::S2, 1000, PERIOD),
            Err(Error::Undefined(_))
        ));
    }

    fn arb_stream() -> impl Strategy<Value = Vec<(u8, u64)>> {
        prop::collection::vec((0u8..4, 0u64..2_000_000), 0..200)
    }

    fn build(raw: &[(u8, u64)], dt: u64) -> TagStream {
        stream(
            &raw.iter()
                .map(|&(c, t)| (Channel::from_code(c).unwrap(), t + dt))
                .collect::<Vec<_>>(),
        )
    }

    proptest! {
        #[test]
        fn translation_invariant(raw in arb_stream(), dt in 0u64..1_000_000_000) {
            let spec = CoincidenceSpec {
                channels: vec![Channel::H1, Channel::S1, Channel::H2],
                shifted: vec![Channel::H2],
                window_ps: 5000,
                pulse_offsets: vec![-2, 0, 1, 3],
                period_ps: 40_000.0,
            };
            prop_assert_eq!(count_nfold(&build(&raw, 0), &spec).unwrap(), count_nfold(&build(&raw, dt), &spec).unwrap());
        }

        #[test]
        fn offset_equals_shifted_stream(raw in arb_stream(), n in 1i64..5) {
            let period = 40_000.0;
            let spec = CoincidenceSpec {
                channels: vec![Channel::H1, Channel::S2],
                shifted: vec![Channel::S2],
                window_ps: 5000,
                pulse_offsets: vec![n],
                period_ps: period,
            };
            let shift = (n as f64 * period) as u64;
            // Move S2 earlier by n periods; keep everything non-negative by
            // moving the rest later instead.
            let moved: Vec<(u8, u64)> = raw
                .iter()
                .map(|&(c, t)| if c == Channel::S2.code() { (c, t) } else { (c, t + shift) })
                .collect();
            let plain = CoincidenceSpec { shifted: vec![], pulse_offsets: vec![0], ..spec.clone() };
            prop_assert_eq!(
                count_nfold(&build(&raw, 0), &spec).unwrap()[0].1,
                count_nfold(&build(&moved, 0), &plain).unwrap()[0].1
            );
        }
    }
}
