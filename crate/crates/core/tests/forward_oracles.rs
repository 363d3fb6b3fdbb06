//! Forward-pass checks against independently scripted re-computations.
//!
//! The oracles below use nested `Vec<Vec<f64>>` matrices and plain loops, and
//! share no arithmetic helpers with the library.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tbcnn::encoder::{conv_node, encode, max_pool, tree_convolve, EncoderParams};
use tbcnn::matcher::{classify, match_vectors, ClassifierParams, HeuristicSet};
use tbcnn::numeric::Matrix;
use tbcnn::{DepTree, EmbeddingTable};

type Dense = Vec<Vec<f64>>;

fn dense(m: &Matrix) -> Dense {
    (0..m.rows()).map(|r| (0..m.cols()).map(|c| m.get(r, c)).collect()).collect()
}

fn oracle_mv(m: &Dense, v: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for row in m {
        let mut s = 0.0;
        for j in 0..v.len() {
            s += row[j] * v[j];
        }
        out.push(s);
    }
    out
}

fn oracle_relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| if x < 0.0 { 0.0 } else { x }).collect()
}

fn random_params(n_e: usize, n_c: usize, n_h: usize, n_rel: usize, seed: u64) -> EncoderParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = EncoderParams::new(n_e, n_c, n_h, n_rel, &mut rng);
    // non-zero biases so the bias path is exercised
    p.b_conv.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
    p.b_hid.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
    p
}

fn oracle_conv(p: &EncoderParams, parent: &[f64], children: &[(Vec<f64>, usize)]) -> Vec<f64> {
    let mut acc = oracle_mv(&dense(&p.w_parent), parent);
    for (c, r) in children {
        let part = oracle_mv(&dense(&p.w_rel[*r]), c);
        for i in 0..acc.len() {
            acc[i] += part[i];
        }
    }
    for i in 0..acc.len() {
        acc[i] += p.b_conv[i];
    }
    oracle_relu(acc)
}

#[test]
fn conv_node_matches_scripted_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for seed in 0..10 {
        let p = random_params(3, 3, 3, 4, seed);
        let parent: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let children: Vec<(Vec<f64>, usize)> = (0..2)
            .map(|_| ((0..3).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(0..4)))
            .collect();
        let refs: Vec<(&[f64], usize)> = children.iter().map(|(c, r)| (c.as_slice(), *r)).collect();
        let got = conv_node(&parent, &refs, &p).unwrap();
        let want = oracle_conv(&p, &parent, &children);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn encode_matches_scripted_end_to_end_oracle() {
    let p = random_params(4, 4, 4, 5, 77);
    let emb = EmbeddingTable::random(9, 4, &mut ChaCha8Rng::seed_from_u64(78));
    let mut emb = emb;
    emb.matrix.scale(5.0);
    // 5 nodes: root 2, children 1 and 4, node 3 under 4, node 5 under 1
    let heads = [2, 0, 4, 2, 1];
    let tokens = vec![3, 1, 7, 3, 8];
    let rels = vec![2, 1, 4, 3, 2];
    let tree = DepTree::new(tokens.clone(), &heads, rels.clone()).unwrap();
    let (h, trace) = encode(&tree, &emb, &p).unwrap();

    // scripted oracle
    let row = |t: usize| emb.matrix.row(t).to_vec();
    let mut maps = Vec::new();
    for node in 0..5 {
        let mut kids = Vec::new();
        for (c, &hd) in heads.iter().enumerate() {
            if hd == node + 1 {
                kids.push((row(tokens[c]), rels[c]));
            }
        }
        maps.push(oracle_conv(&p, &row(tokens[node]), &kids));
    }
    let mut pooled = vec![f64::NEG_INFINITY; 4];
    for m in &maps {
        for d in 0..4 {
            if m[d] > pooled[d] {
                pooled[d] = m[d];
            }
        }
    }
    let mut hid = oracle_mv(&dense(&p.w_hid), &pooled);
    for i in 0..4 {
        hid[i] += p.b_hid[i];
    }
    let want = oracle_relu(hid);

    for (a, b) in h.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(trace.feature_maps.len(), 5);
    for (got, exp) in trace.feature_maps.iter().zip(&maps) {
        for (a, b) in got.iter().zip(exp) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn child_order_does_not_change_conv_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..20 {
        let p = random_params(6, 5, 3, 6, seed);
        let parent: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let children: Vec<(Vec<f64>, usize)> = (0..5)
            .map(|_| ((0..6).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(0..6)))
            .collect();
        let mut refs: Vec<(&[f64], usize)> = children.iter().map(|(c, r)| (c.as_slice(), *r)).collect();
        let base = conv_node(&parent, &refs, &p).unwrap();
        refs.reverse();
        refs.rotate_left(2);
        let permuted = conv_node(&parent, &refs, &p).unwrap();
        for (a, b) in base.iter().zip(&permuted) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn shared_encoder_gives_identical_vectors() {
    let p = random_params(5, 6, 4, 3, 1);
    let emb = EmbeddingTable::random(10, 5, &mut ChaCha8Rng::seed_from_u64(2));
    let tree = DepTree::new(vec![1, 4, 6], &[0, 1, 1], vec![1, 2, 0]).unwrap();
    let (as_premise, _) = encode(&tree, &emb, &p).unwrap();
    let (as_hypothesis, _) = encode(&tree, &emb, &p).unwrap();
    assert_eq!(as_premise, as_hypothesis);
}

#[test]
fn pooled_width_independent_of_length_and_dominates_maps() {
    let p = random_params(4, 7, 3, 3, 9);
    let emb = EmbeddingTable::random(30, 4, &mut ChaCha8Rng::seed_from_u64(3));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in [1usize, 2, 5, 13, 29] {
        let heads: Vec<usize> = (0..n).map(|i| if i == 0 { 0 } else { rng.random_range(1..=i) }).collect();
        let tokens: Vec<usize> = (0..n).map(|_| rng.random_range(0..30)).collect();
        let rels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let tree = DepTree::new(tokens, &heads, rels).unwrap();
        let maps = tree_convolve(&tree, &emb, &p).unwrap();
        assert_eq!(maps.len(), n);
        let (pooled, argmax) = max_pool(&maps).unwrap();
        assert_eq!(pooled.len(), 7);
        for d in 0..7 {
            assert!(maps.iter().all(|m| pooled[d] >= m[d]));
            assert_eq!(pooled[d], maps[argmax[d]][d]);
        }
    }
}

#[test]
fn classify_matches_scripted_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let hs = HeuristicSet::ALL;
    let h1: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h2: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let m = match_vectors(&h1, &h2, hs).unwrap();
    let cls = ClassifierParams {
        w: Matrix::from_vec(3, 16, (0..48).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap(),
        b: vec![0.2, -0.1, 0.05],
    };
    let got = classify(&m, &cls).unwrap();

    let mut expected_m = h1.clone();
    expected_m.extend(&h2);
    expected_m.extend(h1.iter().zip(&h2).map(|(a, b)| a - b));
    expected_m.extend(h1.iter().zip(&h2).map(|(a, b)| a * b));
    assert_eq!(m, expected_m);
    let z: Vec<f64> = oracle_mv(&dense(&cls.w), &expected_m)
        .iter()
        .zip(&cls.b)
        .map(|(a, b)| a + b)
        .collect();
    let denom: f64 = z.iter().map(|x| x.exp()).sum();
    for (g, zi) in got.iter().zip(&z) {
        assert!((g - zi.exp() / denom).abs() < 1e-12);
    }
}

#[test]
fn difference_block_absorbed_by_concatenation() {
    // W0 (h1 − h2) == [W0 | −W0] [h1; h2]
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let (rows, n) = (rng.random_range(1..6), rng.random_range(1..8));
        let w0: Vec<f64> = (0..rows * n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w0 = Matrix::from_vec(rows, n, w0).unwrap();
        let mut wide = Matrix::zeros(rows, 2 * n);
        for r in 0..rows {
            for c in 0..n {
                wide.set(r, c, w0.get(r, c));
                wide.set(r, n + c, -w0.get(r, c));
            }
        }
        let h1: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let h2: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let diff: Vec<f64> = h1.iter().zip(&h2).map(|(a, b)| a - b).collect();
        let cat: Vec<f64> = h1.iter().chain(&h2).copied().collect();
        let a = w0.matvec(&diff).unwrap();
        let b = wide.matvec(&cat).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-10 * x.abs().max(y.abs()).max(1.0));
        }
    }
}
