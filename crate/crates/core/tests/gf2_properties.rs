use std::collections::HashMap;

use proptest::prelude::*;
use tforge::bench::internal_baseline;
use tforge::gf2::{all_nonzero, sum_of_cubes, BitVec, MultilinearPoly8, SymmetricTensor};

fn factor(n: usize) -> impl Strategy<Value = BitVec> {
    (1u32..1 << n).prop_map(move |b| BitVec::from_bits(b, n))
}

fn factors(max_n: usize) -> impl Strategy<Value = (usize, Vec<BitVec>)> {
    (1..=max_n).prop_flat_map(|n| (Just(n), prop::collection::vec(factor(n), 0..12)))
}

fn is_symmetric(t: &SymmetricTensor) -> bool {
    let n = t.n();
    (0..n).all(|i| {
        (0..n).all(|j| {
            (0..n).all(|k| {
                let v = t.get(i, j, k);
                [t.get(i, k, j), t.get(j, i, k), t.get(j, k, i), t.get(k, i, j), t.get(k, j, i)].iter().all(|&w| w == v)
            })
        })
    })
}

/// Minimal number of cubes for every tensor reachable on n qubits, by
/// enumerating all subsets of the 2^n - 1 nonzero vectors. Repeated factors
/// cancel in pairs, so subsets suffice.
fn rank_table(n: usize) -> HashMap<SymmetricTensor, u32> {
    let vs: Vec<BitVec> = all_nonzero(n).collect();
    let cubes: Vec<SymmetricTensor> = vs.iter().map(|v| SymmetricTensor::cube(v).unwrap()).collect();
    let mut table = HashMap::new();
    let mut sums = vec![SymmetricTensor::zero(n); 1 << vs.len()];
    for mask in 1usize..1 << vs.len() {
        let low = mask.trailing_zeros() as usize;
        sums[mask] = sums[mask & (mask - 1)].xor(&cubes[low]).unwrap();
    }
    for (mask, t) in sums.into_iter().enumerate() {
        let r = mask.count_ones();
        table.entry(t).and_modify(|best: &mut u32| *best = (*best).min(r)).or_insert(r);
    }
    table
}

#[test]
fn completion_bound_and_baseline_dominate_exhaustive_rank() {
    for n in 1..=4 {
        let table = rank_table(n);
        // Tensors with T_iij = T_ijj are exactly the sums of cubes:
        // n diagonal, C(n,2) pair and C(n,3) triple degrees of freedom.
        let free = n + n * (n - 1) / 2 + (n * (n - 1) * n.saturating_sub(2)) / 6;
        assert_eq!(table.len(), 1 << free, "n = {n}");
        for (t, &rank) in &table {
            assert!(t.naive_completion_bound() >= rank);
            assert!(t.flattening_rank() <= rank);
            let b = internal_baseline(t);
            assert!(b.t_count >= rank);
            assert_eq!(sum_of_cubes(&b.factors.unwrap().factors, n).unwrap(), *t);
        }
    }
}

#[test]
fn baseline_finds_rank_one_from_its_monomial_expansion() {
    let table = rank_table(3);
    for u in all_nonzero(3) {
        let t = SymmetricTensor::cube(&u).unwrap();
        assert_eq!(table[&t], 1);
        assert_eq!(internal_baseline(&t).t_count, 1);
    }
}

proptest! {
    #[test]
    fn cube_and_xor_keep_symmetry((n, fs) in factors(6)) {
        let mut t = SymmetricTensor::zero(n);
        for (i, f) in fs.iter().enumerate() {
            if i % 2 == 0 {
                t.xor_cube(f);
            } else {
                t = t.xor(&SymmetricTensor::cube(f).unwrap()).unwrap();
            }
            prop_assert!(is_symmetric(&t));
        }
        prop_assert!(t.check_waring().is_ok());
    }

    #[test]
    fn mobius_round_trip(n in 0usize..=6, seed in any::<u64>()) {
        let mut s = seed;
        let table: Vec<u8> = (0..1usize << n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 61) as u8
            })
            .collect();
        let p = MultilinearPoly8::mobius_from_truth_table(&table).unwrap();
        for x in 0..1u32 << n {
            prop_assert_eq!(p.evaluate(x), table[x as usize]);
        }
    }

    #[test]
    fn phase_of_parities_gives_sum_of_cubes((n, fs) in factors(5)) {
        let table: Vec<u8> = (0..1u32 << n)
            .map(|x| fs.iter().map(|u| (u.bits() & x).count_ones() as u8 % 2).sum::<u8>() % 8)
            .collect();
        let t = MultilinearPoly8::mobius_from_truth_table(&table).unwrap().to_tensor().unwrap();
        prop_assert_eq!(t, sum_of_cubes(&fs, n).unwrap());
    }

    #[test]
    fn baseline_is_valid_and_bounded((n, fs) in factors(6)) {
        let t = sum_of_cubes(&fs, n).unwrap();
        let b = internal_baseline(&t);
        prop_assert!(b.t_count <= t.naive_completion_bound());
        prop_assert_eq!(sum_of_cubes(&b.factors.unwrap().factors, n).unwrap(), t);
    }

    #[test]
    fn text_and_binary_formats_round_trip((n, fs) in factors(8)) {
        let t = sum_of_cubes(&fs, n).unwrap();
        prop_assert_eq!(SymmetricTensor::from_text(&t.to_text()).unwrap(), t.clone());
        prop_assert_eq!(SymmetricTensor::from_bytes(&t.to_bytes()).unwrap(), t);
    }
}
