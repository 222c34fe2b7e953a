//! Triplet margin ranking loss.
//!
//! For a triplet (A, P, N) with embeddings on the unit hypersphere, δ+ is the
//! anchor-positive distance and δ− the anchor-negative distance. The
//! effective margin is μ̂ = δ− − δ+ and the loss at margin μ is
//! `max(0, μ + δ+ − δ−)`. A triplet is easy when its loss is zero.
//!
//! In-triplet hard negative mining measures the negative against whichever
//! of anchor and positive is closer to it: δ− = min(d(A,N), d(P,N)). When the
//! positive wins, the roles of anchor and positive are swapped for the
//! negative term.

use crate::{Error, Result};

/// Added under the square root when differentiating distances.
pub const DISTANCE_GRAD_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletDistances {
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub effective_margin: f64,
    /// Mining measured the negative against the positive instead of the anchor.
    pub swapped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difficulty {
    Easy,
    Hard,
}

fn check_lengths(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "vectors of length {} and {} cannot be compared",
            u.len(),
            v.len()
        )));
    }
    Ok(())
}

/// Euclidean (non-squared) distance.
pub fn distance(u: &[f64], v: &[f64]) -> Result<f64> {
    check_lengths(u, v)?;
    Ok(squared_distance(u, v).sqrt())
}

pub(crate) fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn triplet_distances(
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
    mining: bool,
) -> Result<TripletDistances> {
    let delta_plus = distance(anchor, positive)?;
    let anchor_negative = distance(anchor, negative)?;
    let (delta_minus, swapped) = if mining {
        let positive_negative = distance(positive, negative)?;
        if positive_negative < anchor_negative {
            (positive_negative, true)
        } else {
            (anchor_negative, false)
        }
    } else {
        (anchor_negative, false)
    };
    Ok(TripletDistances {
        delta_plus,
        delta_minus,
        effective_margin: delta_minus - delta_plus,
        swapped,
    })
}

fn check_margin(margin: f64) -> Result<()> {
    if !(margin >= 0.0) {
        return Err(Error::Config(format!("margin must be non-negative, got {margin}")));
    }
    Ok(())
}

/// `max(0, μ + δ+ − δ−)`.
pub fn triplet_loss(td: &TripletDistances, margin: f64) -> Result<f64> {
    check_margin(margin)?;
    Ok((margin + td.delta_plus - td.delta_minus).max(0.0))
}

/// Easy exactly when the loss is zero, which includes the boundary μ̂ = μ.
pub fn classify(td: &TripletDistances, margin: f64) -> Result<Difficulty> {
    Ok(classify_loss(triplet_loss(td, margin)?))
}

pub fn classify_loss(loss: f64) -> Difficulty {
    if loss == 0.0 {
        Difficulty::Easy
    } else {
        Difficulty::Hard
    }
}

/// Loss value and its gradients with respect to the three embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrad {
    pub loss: f64,
    pub distances: TripletDistances,
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// ∂‖u − v‖/∂u with the root stabilized.
fn distance_grad(u: &[f64], v: &[f64]) -> Vec<f64> {
    let denom = (squared_distance(u, v) + DISTANCE_GRAD_EPSILON).sqrt();
    u.iter().zip(v).map(|(a, b)| (a - b) / denom).collect()
}

pub fn triplet_loss_grad(
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
    margin: f64,
    mining: bool,
) -> Result<TripletGrad> {
    let distances = triplet_distances(anchor, positive, negative, mining)?;
    let loss = triplet_loss(&distances, margin)?;
    let dim = anchor.len();
    let mut grad = TripletGrad {
        loss,
        distances,
        anchor: vec![0.0; dim],
        positive: vec![0.0; dim],
        negative: vec![0.0; dim],
    };
    if loss == 0.0 {
        return Ok(grad);
    }

    // + ‖a − p‖
    let g_ap = distance_grad(anchor, positive);
    for i in 0..dim {
        grad.anchor[i] += g_ap[i];
        grad.positive[i] -= g_ap[i];
    }
    // − ‖x − n‖, x the anchor or (after a swap) the positive
    let near = if distances.swapped { positive } else { anchor };
    let g_xn = distance_grad(near, negative);
    let near_grad = if distances.swapped {
        &mut grad.positive
    } else {
        &mut grad.anchor
    };
    for i in 0..dim {
        near_grad[i] -= g_xn[i];
        grad.negative[i] += g_xn[i];
    }
    Ok(grad)
}
