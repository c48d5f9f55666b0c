//! Trajectory sampling of sequential threshold detections.
//!
//! A [`Trajectory`] is the binary tree of collapse outcomes for an ordered detector
//! list, built once and then walked with one uniform draw per detector. [`walk`]
//! performs the same walk without precomputing the tree, consuming the generator in
//! exactly the same way, so both routes give identical samples for identical streams.

use rand::Rng;

use crate::error::Result;
use crate::fock::{StateVector, ZERO_NORM_THRESHOLD};
use crate::optics::{detect_threshold, ClickPattern, DetectorModel};

#[derive(Clone, Debug)]
pub enum Trajectory<L> {
    Leaf(L),
    Detect {
        p_click: f64,
        quiet: Option<Box<Trajectory<L>>>,
        click: Option<Box<Trajectory<L>>>,
    },
}

impl<L> Trajectory<L> {
    /// Expands every branch with probability above the zero-norm threshold; `leaf`
    /// receives the full click pattern and the collapsed state.
    pub fn build<F>(state: &StateVector, detectors: &[(crate::fock::ModeId, DetectorModel)], leaf: &mut F) -> Result<Self>
    where
        F: FnMut(&ClickPattern, &StateVector) -> Result<L>,
    {
        let mut pattern = Vec::with_capacity(detectors.len());
        Self::grow(state, detectors, &mut pattern, leaf)
    }

    fn grow<F>(
        state: &StateVector,
        detectors: &[(crate::fock::ModeId, DetectorModel)],
        pattern: &mut Vec<bool>,
        leaf: &mut F,
    ) -> Result<Self>
    where
        F: FnMut(&ClickPattern, &StateVector) -> Result<L>,
    {
        let Some(((mode, det), rest)) = detectors.split_first() else {
            return Ok(Trajectory::Leaf(leaf(&ClickPattern(pattern.clone()), state)?));
        };
        let [q, k] = detect_threshold(state, mode, det)?;
        let mut sub = |branch: Option<StateVector>, clicked: bool| -> Result<Option<Box<Self>>> {
            match branch {
                Some(s) => {
                    pattern.push(clicked);
                    let t = Self::grow(&s, rest, pattern, leaf);
                    pattern.pop();
                    Ok(Some(Box::new(t?)))
                }
                None => Ok(None),
            }
        };
        let quiet = sub(q.state, false)?;
        let click = sub(k.state, true)?;
        Ok(Trajectory::Detect {
            p_click: k.probability,
            quiet,
            click,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &L {
        let mut node = self;
        loop {
            match node {
                Trajectory::Leaf(l) => return l,
                Trajectory::Detect { p_click, quiet, click } => {
                    let clicked = rng.gen::<f64>() < *p_click;
                    node = match (quiet, click) {
                        (Some(q), Some(c)) => {
                            if clicked {
                                c
                            } else {
                                q
                            }
                        }
                        (Some(q), None) => q,
                        (None, Some(c)) => c,
                        (None, None) => unreachable!("detection node without branches"),
                    };
                }
            }
        }
    }

    /// All leaves with their path probabilities (branches below the threshold dropped).
    pub fn leaves(&self) -> Vec<(f64, &L)> {
        let mut out = Vec::new();
        self.collect(1.0, &mut out);
        out
    }

    fn collect<'a>(&'a self, p: f64, out: &mut Vec<(f64, &'a L)>) {
        match self {
            Trajectory::Leaf(l) => out.push((p, l)),
            Trajectory::Detect { p_click, quiet, click } => {
                if let Some(q) = quiet {
                    q.collect(p * (1.0 - p_click), out);
                }
                if let Some(c) = click {
                    c.collect(p * p_click, out);
                }
            }
        }
    }
}

/// Samples one trajectory by collapsing detector after detector.
pub fn walk<R: Rng + ?Sized>(
    state: &StateVector,
    detectors: &[(crate::fock::ModeId, DetectorModel)],
    rng: &mut R,
) -> Result<(ClickPattern, StateVector)> {
    let mut s = state.clone();
    let mut pattern = Vec::with_capacity(detectors.len());
    for (mode, det) in detectors {
        let [q, k] = detect_threshold(&s, mode, det)?;
        let clicked = rng.gen::<f64>() < k.probability;
        let take_click = match (&q.state, &k.state) {
            (Some(_), Some(_)) => clicked,
            (None, _) => true,
            (_, None) => false,
        };
        let branch = if take_click { k } else { q };
        if branch.probability < ZERO_NORM_THRESHOLD && branch.state.is_none() {
            return Err(crate::error::numerical("trajectory reached an empty branch"));
        }
        pattern.push(take_click);
        s = branch.state.expect("branch state present");
    }
    Ok((ClickPattern(pattern), s))
}
