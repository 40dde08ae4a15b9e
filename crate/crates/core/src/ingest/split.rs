use rand::seq::SliceRandom;

use super::{extract_onsets, extract_windows, Dataset, RawSession};
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::NUM_CLASSES;

/// Stratified shuffle split of `labels` into `(train, test)` index lists,
/// both sorted ascending.
///
/// The test set holds `round(n * test_fraction)` items. Each class gets
/// `round(count * test_fraction)` of them, then the remainder is settled by
/// largest fractional deficit, with ties broken in a seeded class order.
/// Classes absent from `labels` are ignored; present classes need at least
/// two members.
pub fn stratified_split(
    labels: &[usize],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} not in (0, 1)"
        )));
    }
    if labels.is_empty() {
        return Err(Error::Empty("label set"));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, &l) in labels.iter().enumerate() {
        if l >= NUM_CLASSES {
            return Err(Error::InvalidLabel(l));
        }
        by_class[l].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        if members.len() == 1 {
            return Err(Error::InsufficientClass {
                class,
                count: 1,
                needed: 2,
            });
        }
    }

    let mut rng = seeded(seed);
    let n_test = (labels.len() as f64 * test_fraction).round() as usize;
    let target: Vec<f64> = by_class
        .iter()
        .map(|m| m.len() as f64 * test_fraction)
        .collect();
    let cap = |c: usize| by_class[c].len().saturating_sub(1);
    let mut alloc: Vec<usize> = (0..NUM_CLASSES)
        .map(|c| (target[c].round() as usize).min(cap(c)))
        .collect();

    let mut order: Vec<usize> = (0..NUM_CLASSES).filter(|&c| !by_class[c].is_empty()).collect();
    order.shuffle(&mut rng);

    loop {
        let total: usize = alloc.iter().sum();
        if total < n_test {
            let pick = order
                .iter()
                .copied()
                .filter(|&c| alloc[c] < cap(c))
                .fold(None, |best: Option<usize>, c| match best {
                    Some(b) if target[b] - alloc[b] as f64 >= target[c] - alloc[c] as f64 => {
                        Some(b)
                    }
                    _ => Some(c),
                });
            match pick {
                Some(c) => alloc[c] += 1,
                None => break,
            }
        } else if total > n_test {
            let pick = order
                .iter()
                .copied()
                .filter(|&c| alloc[c] > 0)
                .fold(None, |best: Option<usize>, c| match best {
                    Some(b) if target[b] - alloc[b] as f64 <= target[c] - alloc[c] as f64 => {
                        Some(b)
                    }
                    _ => Some(c),
                });
            match pick {
                Some(c) => alloc[c] -= 1,
                None => break,
            }
        } else {
            break;
        }
    }

    let mut train = Vec::with_capacity(labels.len() - n_test);
    let mut test = Vec::with_capacity(n_test);
    for (class, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        test.extend_from_slice(&members[..alloc[class]]);
        train.extend_from_slice(&members[alloc[class]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Epoch every session and pool the windows in session order.
pub fn session_windows(sessions: &[RawSession], window_len: usize) -> Result<Dataset> {
    let mut windows = Vec::new();
    for s in sessions {
        let onsets = extract_onsets(&s.markers)?;
        windows.extend(extract_windows(s, &onsets, window_len)?);
    }
    Dataset::new(windows)
}

/// Epoch every session and make a stratified, seeded train/test split.
pub fn assemble_and_split(
    sessions: &[RawSession],
    window_len: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let all = session_windows(sessions, window_len)?;
    if all.is_empty() {
        return Err(Error::Empty("window set"));
    }
    for (class, &count) in all.class_counts.iter().enumerate() {
        if count < 2 {
            return Err(Error::InsufficientClass {
                class,
                count,
                needed: 2,
            });
        }
    }
    let (train, test) = stratified_split(&all.labels(), test_fraction, seed)?;
    Ok((all.subset(&train), all.subset(&test)))
}

/// Subject-wise split: windows from sessions whose id is in `test_ids` form
/// the test set, everything else trains.
pub fn split_by_session(
    sessions: &[RawSession],
    window_len: usize,
    test_ids: &[String],
) -> Result<(Dataset, Dataset)> {
    let (test_sessions, train_sessions): (Vec<_>, Vec<_>) = sessions
        .iter()
        .cloned()
        .partition(|s| test_ids.contains(&s.meta.id));
    if test_sessions.is_empty() || train_sessions.is_empty() {
        return Err(Error::InvalidArgument(
            "session split needs at least one train and one test session".into(),
        ));
    }
    Ok((
        session_windows(&train_sessions, window_len)?,
        session_windows(&test_sessions, window_len)?,
    ))
}
