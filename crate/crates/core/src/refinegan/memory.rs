//! Key-value memory bank: unit-norm spatial keys paired with unit-norm
//! identity values, cosine retrieval, similarity-thresholded update with
//! age-based replacement, and the threshold triplet loss.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Clone, Debug)]
pub struct MemorySlot<T> {
    pub key: Array1<T>,
    pub value: Array1<T>,
    pub age: u64,
}

#[derive(Clone, Debug)]
pub struct MemoryBank<T> {
    slots: Vec<MemorySlot<T>>,
    capacity: usize,
    key_dim: usize,
    value_dim: usize,
}

/// What an update did to the bank.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateOutcome {
    /// Existing pair's key pulled toward the query.
    Updated(usize),
    /// New pair stored in a previously empty slot.
    Inserted(usize),
    /// Oldest pair overwritten.
    Replaced(usize),
}

fn checked_unit<T: Real>(v: &Array1<T>, what: &str) -> Result<Array1<T>> {
    let norm = v.dot(v).sqrt();
    if (norm - T::one()).abs() > T::of(1e-3) {
        return Err(Error::invalid(format!("{what} must be unit-norm, |v| = {norm}")));
    }
    Ok(v.mapv(|x| x / norm))
}

impl<T: Real> MemoryBank<T> {
    pub fn new(capacity: usize, key_dim: usize, value_dim: usize) -> Self {
        MemoryBank {
            slots: Vec::new(),
            capacity,
            key_dim,
            value_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn slots(&self) -> &[MemorySlot<T>] {
        &self.slots
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots.len() > self.capacity {
            return Err(Error::invalid("bank exceeds capacity"));
        }
        for (i, s) in self.slots.iter().enumerate() {
            let kn = s.key.dot(&s.key).sqrt();
            let vn = s.value.dot(&s.value).sqrt();
            if (kn - T::one()).abs() > T::of(1e-6) || (vn - T::one()).abs() > T::of(1e-6) {
                return Err(Error::invalid(format!("slot {i} lost unit norm")));
            }
        }
        Ok(())
    }

    /// Restore slots from a checkpoint; keys and values are renormalized to
    /// absorb storage rounding.
    pub fn restore_slots(&mut self, slots: Vec<MemorySlot<T>>) -> Result<()> {
        if slots.len() > self.capacity {
            return Err(Error::invalid("restored slots exceed bank capacity"));
        }
        for s in &slots {
            if s.key.len() != self.key_dim || s.value.len() != self.value_dim {
                return Err(Error::config("restored slot dimension mismatch"));
            }
        }
        self.slots = slots
            .into_iter()
            .map(|mut s| {
                let kn = s.key.dot(&s.key).sqrt().max(T::of(1e-12));
                s.key.mapv_inplace(|x| x / kn);
                let vn = s.value.dot(&s.value).sqrt().max(T::of(1e-12));
                s.value.mapv_inplace(|x| x / vn);
                s
            })
            .collect();
        Ok(())
    }

    /// Nearest key to the query by cosine; ties break to the lowest index.
    fn nearest_key(&self, q: &Array1<T>) -> usize {
        let mut best = 0usize;
        let mut best_sim = T::neg_infinity();
        for (i, s) in self.slots.iter().enumerate() {
            let sim = s.key.dot(q);
            if sim > best_sim {
                best_sim = sim;
                best = i;
            }
        }
        best
    }

    /// Memory writing rule. The nearest key is updated in place when its
    /// stored value matches the ground-truth identity (cosine >= `tau`);
    /// otherwise a new pair fills an empty slot, or evicts the oldest one
    /// once the bank is full. Every other slot ages by one.
    pub fn update(&mut self, q: &Array1<T>, v_gt: &Array1<T>, tau: T) -> Result<UpdateOutcome> {
        if q.len() != self.key_dim || v_gt.len() != self.value_dim {
            return Err(Error::config("query/value dimension mismatch"));
        }
        let q = checked_unit(q, "spatial query")?;
        let v_gt = checked_unit(v_gt, "identity value")?;

        let outcome = if self.slots.is_empty() {
            self.slots.push(MemorySlot {
                key: q,
                value: v_gt,
                age: 0,
            });
            UpdateOutcome::Inserted(0)
        } else {
            let k_star = self.nearest_key(&q);
            let value_sim = self.slots[k_star].value.dot(&v_gt);
            if value_sim >= tau {
                let merged = &self.slots[k_star].key + &q;
                let norm = merged.dot(&merged).sqrt().max(T::of(1e-12));
                for s in self.slots.iter_mut() {
                    s.age += 1;
                }
                let slot = &mut self.slots[k_star];
                slot.key = merged.mapv(|x| x / norm);
                slot.age = 0;
                UpdateOutcome::Updated(k_star)
            } else if self.slots.len() < self.capacity {
                for s in self.slots.iter_mut() {
                    s.age += 1;
                }
                self.slots.push(MemorySlot {
                    key: q,
                    value: v_gt,
                    age: 0,
                });
                UpdateOutcome::Inserted(self.slots.len() - 1)
            } else {
                // Evict the oldest slot; ties break to the lowest index.
                let mut oldest = 0usize;
                for (i, s) in self.slots.iter().enumerate() {
                    if s.age > self.slots[oldest].age {
                        oldest = i;
                    }
                }
                for s in self.slots.iter_mut() {
                    s.age += 1;
                }
                self.slots[oldest] = MemorySlot {
                    key: q,
                    value: v_gt,
                    age: 0,
                };
                UpdateOutcome::Replaced(oldest)
            }
        };
        Ok(outcome)
    }

    /// Value of the key nearest to the query (ties to the lowest index).
    pub fn retrieve(&self, q: &Array1<T>) -> Result<Array1<T>> {
        if self.slots.is_empty() {
            return Err(Error::invalid("cannot retrieve from an empty bank"));
        }
        Ok(self.slots[self.nearest_key(q)].value.clone())
    }

    /// Threshold triplet loss and its gradient with respect to the query.
    ///
    /// Positive: nearest key (by cosine to `q`) among slots whose value
    /// matches `v_gt` at similarity >= `tau`; negative: nearest key among the
    /// rest. Loss `max(0, cos(q,k_neg) - cos(q,k_pos) + margin)`; zero (with
    /// zero gradient) when either candidate set is empty.
    pub fn threshold_triplet_loss(
        &self,
        q: &Array1<T>,
        v_gt: &Array1<T>,
        tau: T,
        margin: T,
    ) -> (T, Array1<T>) {
        let zero_grad = Array1::zeros(q.len());
        let mut best_pos: Option<(T, usize)> = None;
        let mut best_neg: Option<(T, usize)> = None;
        for (i, s) in self.slots.iter().enumerate() {
            let key_sim = s.key.dot(q);
            let bucket = if s.value.dot(v_gt) >= tau {
                &mut best_pos
            } else {
                &mut best_neg
            };
            if bucket.is_none() || key_sim > bucket.unwrap().0 {
                *bucket = Some((key_sim, i));
            }
        }
        let (Some((pos_sim, pos_ix)), Some((neg_sim, neg_ix))) = (best_pos, best_neg) else {
            return (T::zero(), zero_grad);
        };
        let loss = neg_sim - pos_sim + margin;
        if loss <= T::zero() {
            return (T::zero(), zero_grad);
        }
        let grad = &self.slots[neg_ix].key - &self.slots[pos_ix].key;
        (loss, grad)
    }
}

/// Temporal smoothing of retrieved identity features: trailing moving
/// average over `window` frames, renormalized to unit length. A window that
/// cancels to (numerically) zero is degenerate; the previous frame's
/// smoothed feature is reused.
pub fn smooth_retrieved<T: Real>(features: &[Array1<T>], window: usize) -> Result<Vec<Array1<T>>> {
    if features.is_empty() {
        return Err(Error::invalid("no features to smooth"));
    }
    let window = window.max(1);
    let mut out: Vec<Array1<T>> = Vec::with_capacity(features.len());
    for t in 0..features.len() {
        let start = (t + 1).saturating_sub(window);
        let mut acc = Array1::<T>::zeros(features[t].len());
        for f in &features[start..=t] {
            acc += f;
        }
        let norm = acc.dot(&acc).sqrt();
        if norm < T::of(1e-9) {
            let fallback = if t > 0 {
                out[t - 1].clone()
            } else {
                features[0].clone()
            };
            out.push(fallback);
        } else {
            out.push(acc.mapv(|x| x / norm));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn unit(v: Vec<f64>) -> Array1<f64> {
        let a: Array1<f64> = Array1::from_vec(v);
        let n = a.dot(&a).sqrt();
        a.mapv(|x| x / n)
    }

    fn random_unit(rng: &mut StdRng, dim: usize) -> Array1<f64> {
        loop {
            let v: Array1<f64> = Array1::from_shape_fn(dim, |_| rng.gen_range(-1.0..1.0));
            let n = v.dot(&v).sqrt();
            if n > 0.1 {
                return v.mapv(|x| x / n);
            }
        }
    }

    #[test]
    fn empty_bank_inserts_unconditionally() {
        let mut bank = MemoryBank::<f64>::new(4, 3, 3);
        let q = unit(vec![1.0, 0.0, 0.0]);
        let v = unit(vec![0.0, 1.0, 0.0]);
        let out = bank.update(&q, &v, 0.5).unwrap();
        assert_eq!(out, UpdateOutcome::Inserted(0));
        assert_eq!(bank.len(), 1);
        assert_eq!(bank.slots()[0].key, q);
        assert_eq!(bank.slots()[0].value, v);
        assert_eq!(bank.slots()[0].age, 0);
    }

    #[test]
    fn matching_value_pulls_the_key_toward_the_query() {
        let mut bank = MemoryBank::<f64>::new(4, 3, 3);
        let v = unit(vec![0.0, 1.0, 0.0]);
        let k0 = unit(vec![1.0, 0.0, 0.0]);
        bank.update(&k0, &v, 0.5).unwrap();
        // New query near k0 with the same identity value.
        let q = unit(vec![0.8, 0.6, 0.0]);
        let out = bank.update(&q, &v, 0.5).unwrap();
        assert_eq!(out, UpdateOutcome::Updated(0));
        assert_eq!(bank.len(), 1, "bank size unchanged");
        // Hand simulation: normalize(k0 + q).
        let expect = unit(vec![1.0 + 0.8, 0.6, 0.0]);
        for (a, b) in bank.slots()[0].key.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(bank.slots()[0].age, 0);
    }

    #[test]
    fn orthogonal_value_replaces_the_oldest_slot_when_full() {
        let mut bank = MemoryBank::<f64>::new(2, 3, 3);
        let v1 = unit(vec![1.0, 0.0, 0.0]);
        let v2 = unit(vec![0.0, 1.0, 0.0]);
        bank.update(&unit(vec![1.0, 0.0, 0.0]), &v1, 0.5).unwrap();
        bank.update(&unit(vec![0.0, 1.0, 0.0]), &v2, 0.5).unwrap();
        // Slot 0 is now the oldest (age 1 vs 0).
        let v3 = unit(vec![0.0, 0.0, 1.0]); // orthogonal to all stored values
        let q3 = unit(vec![0.6, 0.8, 0.0]);
        let out = bank.update(&q3, &v3, 0.5).unwrap();
        assert_eq!(out, UpdateOutcome::Replaced(0));
        assert_eq!(bank.len(), 2);
        assert_eq!(bank.slots()[0].value, v3);
        assert_eq!(bank.slots()[0].age, 0);
    }

    #[test]
    fn update_rule_matches_a_hand_simulated_oracle() {
        // Simulate the documented rule independently and require identical
        // bank contents after 1000 random steps.
        #[derive(Clone)]
        struct OracleSlot {
            key: Vec<f64>,
            value: Vec<f64>,
            age: u64,
        }
        let dim = 6;
        let capacity = 8;
        let tau = 0.5;
        let mut rng = StdRng::seed_from_u64(77);
        let mut bank = MemoryBank::<f64>::new(capacity, dim, dim);
        let mut oracle: Vec<OracleSlot> = Vec::new();

        // A handful of clustered identities so both branches fire.
        let identities: Vec<Array1<f64>> = (0..4).map(|_| random_unit(&mut rng, dim)).collect();

        for _step in 0..1000 {
            let id = rng.gen_range(0..identities.len());
            let v = identities[id].clone();
            let q = random_unit(&mut rng, dim);

            bank.update(&q, &v, tau).unwrap();

            // Oracle.
            let dot = |a: &[f64], b: &[f64]| -> f64 {
                a.iter().zip(b).map(|(x, y)| x * y).sum()
            };
            if oracle.is_empty() {
                oracle.push(OracleSlot {
                    key: q.to_vec(),
                    value: v.to_vec(),
                    age: 0,
                });
            } else {
                let mut k_star = 0;
                for i in 1..oracle.len() {
                    if dot(&oracle[i].key, q.as_slice().unwrap())
                        > dot(&oracle[k_star].key, q.as_slice().unwrap())
                    {
                        k_star = i;
                    }
                }
                if dot(&oracle[k_star].value, v.as_slice().unwrap()) >= tau {
                    let mut merged: Vec<f64> = oracle[k_star]
                        .key
                        .iter()
                        .zip(q.iter())
                        .map(|(a, b)| a + b)
                        .collect();
                    let n = merged.iter().map(|x| x * x).sum::<f64>().sqrt();
                    merged.iter_mut().for_each(|x| *x /= n);
                    for s in oracle.iter_mut() {
                        s.age += 1;
                    }
                    oracle[k_star].key = merged;
                    oracle[k_star].age = 0;
                } else if oracle.len() < capacity {
                    for s in oracle.iter_mut() {
                        s.age += 1;
                    }
                    oracle.push(OracleSlot {
                        key: q.to_vec(),
                        value: v.to_vec(),
                        age: 0,
                    });
                } else {
                    let mut oldest = 0;
                    for i in 1..oracle.len() {
                        if oracle[i].age > oracle[oldest].age {
                            oldest = i;
                        }
                    }
                    for s in oracle.iter_mut() {
                        s.age += 1;
                    }
                    oracle[oldest] = OracleSlot {
                        key: q.to_vec(),
                        value: v.to_vec(),
                        age: 0,
                    };
                }
            }

            assert_eq!(bank.len(), oracle.len());
            for (s, o) in bank.slots().iter().zip(&oracle) {
                assert_eq!(s.age, o.age);
                for (a, b) in s.key.iter().zip(&o.key) {
                    assert!((a - b).abs() < 1e-9);
                }
                for (a, b) in s.value.iter().zip(&o.value) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
        bank.validate().unwrap();
        assert!(bank.len() <= capacity);
    }

    #[test]
    fn retrieval_matches_brute_force_on_large_banks() {
        let dim = 8;
        let mut rng = StdRng::seed_from_u64(5);
        let mut bank = MemoryBank::<f64>::new(10_000, dim, dim);
        for _ in 0..10_000 {
            let q = random_unit(&mut rng, dim);
            let v = random_unit(&mut rng, dim);
            bank.update(&q, &v, 2.0).unwrap(); // tau > 1 forces insert/replace
        }
        assert_eq!(bank.len(), 10_000);
        for _ in 0..100 {
            let q = random_unit(&mut rng, dim);
            let got = bank.retrieve(&q).unwrap();
            // Brute force argmax.
            let mut best = 0usize;
            let mut best_sim = f64::NEG_INFINITY;
            for (i, s) in bank.slots().iter().enumerate() {
                let sim = s.key.dot(&q);
                if sim > best_sim {
                    best_sim = sim;
                    best = i;
                }
            }
            assert_eq!(got, bank.slots()[best].value);
        }
    }

    #[test]
    fn retrieve_exact_key_and_single_slot() {
        let mut bank = MemoryBank::<f64>::new(4, 3, 3);
        let k = unit(vec![0.6, 0.8, 0.0]);
        let v = unit(vec![0.0, 0.0, 1.0]);
        bank.update(&k, &v, 0.5).unwrap();
        assert_eq!(bank.retrieve(&k).unwrap(), v);
        // One slot: any query returns its value.
        assert_eq!(bank.retrieve(&unit(vec![-1.0, 0.0, 0.0])).unwrap(), v);
        assert!(MemoryBank::<f64>::new(4, 3, 3).retrieve(&k).is_err());
    }

    #[test]
    fn triplet_loss_hinge_boundaries() {
        let mut bank = MemoryBank::<f64>::new(4, 2, 2);
        let v_match = unit(vec![1.0, 0.0]);
        let v_other = unit(vec![0.0, 1.0]);
        // Positive key aligned with +x, negative key aligned with -x.
        bank.update(&unit(vec![1.0, 0.0]), &v_match, 2.0).unwrap();
        bank.update(&unit(vec![-1.0, 0.0]), &v_other, 2.0).unwrap();

        // cos(q,k_pos)=1, cos(q,k_neg)=-1 -> hinge inactive.
        let (loss, grad) =
            bank.threshold_triplet_loss(&unit(vec![1.0, 0.0]), &v_match, 0.5, 0.2);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));

        // cos(q,k_pos)=0, cos(q,k_neg)=0 -> loss = margin.
        let (loss, grad) = bank.threshold_triplet_loss(&unit(vec![0.0, 1.0]), &v_match, 0.5, 0.2);
        assert!((loss - 0.2).abs() < 1e-12);
        // grad = k_neg - k_pos = (-2, 0).
        assert!((grad[0] + 2.0).abs() < 1e-12 && grad[1].abs() < 1e-12);
    }

    #[test]
    fn triplet_loss_matches_brute_force_candidate_scan() {
        let dim = 5;
        let mut rng = StdRng::seed_from_u64(13);
        let mut bank = MemoryBank::<f64>::new(64, dim, dim);
        let ids: Vec<Array1<f64>> = (0..3).map(|_| random_unit(&mut rng, dim)).collect();
        for _ in 0..64 {
            let id = ids[rng.gen_range(0..3)].clone();
            bank.update(&random_unit(&mut rng, dim), &id, 2.0).unwrap();
        }
        for _ in 0..50 {
            let q = random_unit(&mut rng, dim);
            let v = ids[rng.gen_range(0..3)].clone();
            let tau = 0.5;
            let margin = 0.2;
            let (loss, _) = bank.threshold_triplet_loss(&q, &v, tau, margin);

            // Brute-force scan.
            let mut pos = f64::NEG_INFINITY;
            let mut neg = f64::NEG_INFINITY;
            for s in bank.slots() {
                let key_sim = s.key.dot(&q);
                if s.value.dot(&v) >= tau {
                    pos = pos.max(key_sim);
                } else {
                    neg = neg.max(key_sim);
                }
            }
            let expect = if pos.is_finite() && neg.is_finite() {
                (neg - pos + margin).max(0.0)
            } else {
                0.0
            };
            assert!((loss - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_identity_and_cancellation() {
        let f = unit(vec![0.6, 0.8]);
        let same = vec![f.clone(); 5];
        let out = smooth_retrieved(&same, 3).unwrap();
        for s in &out {
            for (a, b) in s.iter().zip(f.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }

        // Alternating f, -f with window 2 cancels; previous feature reused.
        let alt = vec![f.clone(), f.mapv(|x| -x), f.clone(), f.mapv(|x| -x)];
        let out = smooth_retrieved(&alt, 2).unwrap();
        assert_eq!(out[0], f);
        assert_eq!(out[1], out[0], "degenerate window reuses previous frame");
        assert_eq!(out[2], out[1]);
    }

    #[test]
    fn window_three_matches_arithmetic_oracle() {
        let fs = vec![
            unit(vec![1.0, 0.0]),
            unit(vec![0.0, 1.0]),
            unit(vec![1.0, 1.0]),
            unit(vec![1.0, -1.0]),
        ];
        let out = smooth_retrieved(&fs, 3).unwrap();
        for t in 0..fs.len() {
            let start = (t + 1).saturating_sub(3);
            let mut acc = vec![0.0; 2];
            for f in &fs[start..=t] {
                acc[0] += f[0];
                acc[1] += f[1];
            }
            let n = (acc[0] * acc[0] + acc[1] * acc[1]).sqrt();
            assert!((out[t][0] - acc[0] / n).abs() < 1e-12);
            assert!((out[t][1] - acc[1] / n).abs() < 1e-12);
            let norm = out[t].dot(&out[t]).sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }
}
