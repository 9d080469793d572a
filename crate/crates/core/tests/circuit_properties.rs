use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tforge::bench::internal_baseline;
use tforge::circuit::{Circuit, Gate};
use tforge::train::gen_random_circuit;

fn random_circuit(seed: u64, max_n: usize) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_n);
    gen_random_circuit(n, &mut rng)
}

/// Random circuit over the whole gate set, including Clifford phases.
fn mixed_circuit(seed: u64) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=5);
    let mut c = Circuit::new(n).unwrap();
    for _ in 0..rng.random_range(0..30) {
        let q = rng.random_range(0..n);
        let r = (q + rng.random_range(1..n)) % n;
        let s = (0..n).find(|&x| x != q && x != r).unwrap();
        let g = match rng.random_range(0..9) {
            0 => Gate::Cnot { control: q, target: r },
            1 => Gate::T(q),
            2 => Gate::Tdg(q),
            3 => Gate::S(q),
            4 => Gate::Sdg(q),
            5 => Gate::Z(q),
            6 => Gate::Cz(q, r),
            7 => Gate::Ccz(q, r, s),
            _ => Gate::X(q),
        };
        c.push(g).unwrap();
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn streaming_tensor_matches_truth_table(seed in any::<u64>()) {
        let c = random_circuit(seed, 6);
        prop_assert_eq!(c.streaming_signature_tensor(), c.signature_tensor().unwrap());
    }

    #[test]
    fn rebuilt_circuits_are_clifford_equivalent(seed in any::<u64>()) {
        let c = random_circuit(seed, 5);
        let target = c.phase_polynomial().unwrap();
        let t = c.streaming_signature_tensor();
        for factors in [t.monomial_factorization(), internal_baseline(&t).factors.unwrap().factors, c.t_parities()] {
            let rebuilt = Circuit::reconstruct(&factors, &target).unwrap();
            prop_assert!(rebuilt.phase_polynomial().unwrap().clifford_equivalent(&target).unwrap());
        }
    }

    #[test]
    fn x_gates_leave_the_tensor_unchanged(seed in any::<u64>()) {
        let c = random_circuit(seed, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut with_x = Circuit::new(c.n_qubits()).unwrap();
        for g in c.gates() {
            if rng.random_bool(0.2) {
                with_x.push(Gate::X(rng.random_range(0..c.n_qubits()))).unwrap();
            }
            with_x.push(*g).unwrap();
        }
        prop_assert_eq!(with_x.signature_tensor().unwrap(), c.signature_tensor().unwrap());
    }

    #[test]
    fn parse_inverts_display(seed in any::<u64>()) {
        let c = mixed_circuit(seed);
        prop_assert_eq!(Circuit::parse(&c.to_string()).unwrap(), c);
    }

    #[test]
    fn mixed_gate_sets_agree_on_both_paths(seed in any::<u64>()) {
        let c = mixed_circuit(seed);
        if let Ok(t) = c.signature_tensor() {
            let rebuilt = Circuit::reconstruct(&t.monomial_factorization(), &c.phase_polynomial().unwrap()).unwrap();
            prop_assert_eq!(rebuilt.signature_tensor().unwrap(), t);
        }
    }
}
