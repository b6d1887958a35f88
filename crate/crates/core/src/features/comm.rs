// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::ingest::{CallEvent, MessageEvent};

/// Messages in `(prompt - window_s, prompt]` and calls whose
/// `[start, start + duration]` overlaps that interval.
pub fn comm_counts(sms: &[MessageEvent], calls: &[CallEvent], prompt: i64, window_s: i64) -> (usize, usize) {
    let from = prompt - window_s;
    let lo = sms.partition_point(|m| m.timestamp <= from);
    let hi = sms.partition_point(|m| m.timestamp <= prompt);
    let upto = calls.partition_point(|c| c.start <= prompt);
    let n_calls = calls[..upto].iter().filter(|c| c.end() > from).count();
    (hi.saturating_sub(lo), n_calls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{CallDirection, MessageDirection};
    use rand::Rng;

    fn sms(t: i64) -> MessageEvent {
        MessageEvent {
            participant_id: "p".into(),
            timestamp: t,
            direction: MessageDirection::Sent,
        }
    }

    fn call(start: i64, duration: i64) -> CallEvent {
        CallEvent {
            participant_id: "p".into(),
            start,
            duration,
            direction: CallDirection::Incoming,
        }
    }

    #[test]
    fn window_is_left_open() {
        let p = 10_000;
        assert_eq!(comm_counts(&[sms(p - 3601)], &[], p, 3600), (0, 0));
        assert_eq!(comm_counts(&[sms(p - 3600)], &[], p, 3600), (0, 0));
        assert_eq!(comm_counts(&[sms(p - 3599)], &[], p, 3600), (1, 0));
        assert_eq!(comm_counts(&[sms(p)], &[], p, 3600), (1, 0));
        assert_eq!(comm_counts(&[sms(p + 1)], &[], p, 3600), (0, 0));
    }

    #[test]
    fn call_overlapping_from_before_window() {
        let p = 10_000;
        assert_eq!(comm_counts(&[], &[call(p - 4000, 600)], p, 3600), (0, 1));
        assert_eq!(comm_counts(&[], &[call(p - 4000, 300)], p, 3600), (0, 0));
        assert_eq!(comm_counts(&[], &[call(p, 60)], p, 3600), (0, 1));
    }

    #[test]
    fn three_messages_two_calls() {
        let p = 100_000;
        let messages = [sms(p - 4000), sms(p - 3000), sms(p - 100), sms(p), sms(p + 5)];
        let calls = [
            call(p - 7200, 100),
            call(p - 3700, 200),
            call(p - 50, 30),
            call(p + 10, 10),
        ];
        assert_eq!(comm_counts(&messages, &calls, p, 3600), (3, 2));
    }

    #[test]
    fn matches_brute_force_scan() {
        let mut rng = crate::seed::rng(3);
        for _ in 0..50 {
            let mut messages: Vec<_> = (0..rng.random_range(0..60))
                .map(|_| sms(rng.random_range(0..20_000)))
                .collect();
            let mut calls: Vec<_> = (0..rng.random_range(0..20))
                .map(|_| call(rng.random_range(0..20_000), rng.random_range(0..3000)))
                .collect();
            messages.sort_by_key(|m| m.timestamp);
            calls.sort_by_key(|c| c.start);
            let p = rng.random_range(0..24_000);
            let brute_sms = messages
                .iter()
                .filter(|m| m.timestamp > p - 3600 && m.timestamp <= p)
                .count();
            let brute_calls = calls
                .iter()
                .filter(|c| {
                    // Overlap of closed [s, e] with half-open (p-3600, p].
                    let (s, e) = (c.start, c.start + c.duration);
                    (s..=e).any(|t| t > p - 3600 && t <= p)
                })
                .count();
            assert_eq!(comm_counts(&messages, &calls, p, 3600), (brute_sms, brute_calls));
        }
    }
}
