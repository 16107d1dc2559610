use super::{find_channel, EpochWindow, MiClass, Recording, SignalError};

/// Sample-index layout of a sliding-window pass over a recording.
///
/// Shared by the batch epoching below and the streaming pipeline so both cut
/// exactly the same windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSchedule {
    pub window_samples: usize,
    pub starts: Vec<usize>,
}

/// Window starts at 0, hop, 2*hop, ... with
/// `floor((duration - window) / hop) + 1` windows.
pub fn window_schedule(
    n_samples: usize,
    sample_rate_hz: f64,
    window_len_s: f64,
    hop_s: f64,
) -> Result<WindowSchedule, SignalError> {
    if !(window_len_s > 0.0 && hop_s > 0.0) {
        return Err(SignalError::InvalidWindow(format!(
            "window {window_len_s} s and hop {hop_s} s must be positive"
        )));
    }
    let duration = n_samples as f64 / sample_rate_hz;
    // tolerance absorbs binary rounding of e.g. 0.1 s hops
    if window_len_s > duration + 1e-9 {
        return Err(SignalError::InvalidWindow(format!(
            "window {window_len_s} s exceeds recording duration {duration} s"
        )));
    }
    let window_samples = (window_len_s * sample_rate_hz).round() as usize;
    if window_samples == 0 {
        return Err(SignalError::InvalidWindow("window shorter than one sample".into()));
    }
    let count = ((duration - window_len_s) / hop_s + 1e-9).floor() as usize + 1;
    let starts = (0..count)
        .map(|j| (j as f64 * hop_s * sample_rate_hz).round() as usize)
        .filter(|&s| s + window_samples <= n_samples)
        .collect();
    Ok(WindowSchedule {
        window_samples,
        starts,
    })
}

fn pick_indices(channels: &[String], picks: &[String]) -> Result<Vec<usize>, SignalError> {
    picks
        .iter()
        .map(|p| find_channel(channels, p).ok_or_else(|| SignalError::MissingChannel(p.clone())))
        .collect()
}

/// Cuts sliding windows; each is labelled by the annotation covering its centre.
///
/// An empty `channel_picks` keeps every channel.
pub fn epoch_stream(
    recording: &Recording,
    window_len_s: f64,
    hop_s: f64,
    channel_picks: &[String],
) -> Result<Vec<EpochWindow>, SignalError> {
    let picks = if channel_picks.is_empty() {
        (0..recording.channels().len()).collect()
    } else {
        pick_indices(recording.channels(), channel_picks)?
    };
    let fs = recording.sample_rate_hz();
    let schedule = window_schedule(recording.n_samples(), fs, window_len_s, hop_s)?;
    let channels: Vec<String> = picks
        .iter()
        .map(|&i| recording.channels()[i].clone())
        .collect();

    Ok(schedule
        .starts
        .iter()
        .map(|&start| {
            let end = start + schedule.window_samples;
            let start_s = start as f64 / fs;
            let centre = start_s + schedule.window_samples as f64 / fs / 2.0;
            EpochWindow {
                start_s,
                channels: channels.clone(),
                data: picks
                    .iter()
                    .map(|&i| recording.samples()[i][start..end].to_vec())
                    .collect(),
                sample_rate_hz: fs,
                label: Some(recording.class_at(centre)),
            }
        })
        .collect())
}

/// A single window of `len_s` seconds starting at `start_s`, with an explicit label.
pub fn epoch_at(
    recording: &Recording,
    start_s: f64,
    len_s: f64,
    channel_picks: &[String],
    label: Option<MiClass>,
) -> Result<EpochWindow, SignalError> {
    let picks = if channel_picks.is_empty() {
        (0..recording.channels().len()).collect()
    } else {
        pick_indices(recording.channels(), channel_picks)?
    };
    let fs = recording.sample_rate_hz();
    let start = (start_s * fs).round();
    let len = (len_s * fs).round() as usize;
    if start < 0.0 || len == 0 || start as usize + len > recording.n_samples() {
        return Err(SignalError::InvalidWindow(format!(
            "[{start_s}, {}] s is outside the recording",
            start_s + len_s
        )));
    }
    let start = start as usize;
    Ok(EpochWindow {
        start_s: start as f64 / fs,
        channels: picks.iter().map(|&i| recording.channels()[i].clone()).collect(),
        data: picks
            .iter()
            .map(|&i| recording.samples()[i][start..start + len].to_vec())
            .collect(),
        sample_rate_hz: fs,
        label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::Annotation;
    use proptest::prelude::*;

    fn rec(seconds: f64, fs: f64) -> Recording {
        let n = (seconds * fs).round() as usize;
        Recording::new(
            fs,
            vec!["C3".into(), "C4".into()],
            vec![(0..n).map(|i| i as f64).collect(), vec![0.0; n]],
            vec![Annotation::new(2.0, 4.0, "T2")],
        )
        .unwrap()
    }

    #[test]
    fn ten_seconds_gives_73_windows() {
        let windows = epoch_stream(&rec(10.0, 160.0), 1.0, 0.125, &[]).unwrap();
        assert_eq!(windows.len(), 73);
        assert_eq!(windows[1].start_s, 0.125);
        assert_eq!(windows[1].data[0][0], 20.0);
        assert!(windows.iter().all(|w| w.n_samples() == 160));
    }

    #[test]
    fn window_equal_to_duration_gives_one() {
        assert_eq!(epoch_stream(&rec(2.0, 160.0), 2.0, 0.5, &[]).unwrap().len(), 1);
    }

    #[test]
    fn missing_pick() {
        assert!(matches!(
            epoch_stream(&rec(2.0, 160.0), 1.0, 0.5, &["Cz".into()]),
            Err(SignalError::MissingChannel(c)) if c == "Cz"
        ));
    }

    #[test]
    fn labels_follow_window_centre() {
        let windows = epoch_stream(&rec(10.0, 160.0), 1.0, 0.5, &["C3".into()]).unwrap();
        // centre of window k is 0.5 k + 0.5
        for (k, w) in windows.iter().enumerate() {
            let centre = 0.5 * k as f64 + 0.5;
            let want = if (2.0..6.0).contains(&centre) { MiClass::Right } else { MiClass::Rest };
            assert_eq!(w.label, Some(want), "window {k}");
            assert_eq!(w.n_channels(), 1);
        }
    }

    #[test]
    fn epoch_at_bounds() {
        let r = rec(4.0, 160.0);
        let w = epoch_at(&r, 0.5, 2.0, &["C3".into()], Some(MiClass::Left)).unwrap();
        assert_eq!(w.n_samples(), 320);
        assert_eq!(w.data[0][0], 80.0);
        assert!(epoch_at(&r, 3.0, 2.0, &[], None).is_err());
    }

    proptest! {
        #[test]
        fn count_formula(samples in 160usize..4000, win_q in 1usize..8, hop_q in 1usize..16) {
            // quarter/eighth-second grids keep the formula exact at 160 Hz
            let fs = 160.0;
            let win = win_q as f64 * 0.25;
            let hop = hop_q as f64 * 0.125;
            let duration = samples as f64 / fs;
            prop_assume!(win <= duration);
            let s = window_schedule(samples, fs, win, hop).unwrap();
            let expected = ((duration - win) / hop + 1e-9).floor() as usize + 1;
            prop_assert_eq!(s.starts.len(), expected);
        }
    }
}
