//! Completeness over randomized honest worlds: whatever the registry
//! composition, an allowed, non-revoked participant can always prove any of
//! their identifiers, and every backend accepts the result.

use rand::{Rng, SeedableRng};

use unlinkid_core::hash::Digest;
use unlinkid_core::legitimacy::{
    DisclosingBackend, ExternalZkBackend, LegitimacyStatement, LegitimacyWitness, LoopbackEngine,
    ProofBackend,
};
use unlinkid_core::merkle::MerkleTree;
use unlinkid_core::portfolio::{
    commit_portfolio, derive_portfolio, portfolio_tree, PortfolioSecret,
};
use unlinkid_core::smt::{SmtKey, SparseMerkleTree};

#[test]
fn a_thousand_random_honest_scenarios_all_prove_and_verify() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(0xC0);
    let backends: Vec<Box<dyn ProofBackend>> = vec![
        Box::new(DisclosingBackend),
        Box::new(ExternalZkBackend::new(LoopbackEngine::new([23; 32]))),
    ];

    for round in 0u32..1_000 {
        // A fresh world: 1..6 registered portfolios, some revoked, plus a
        // random epoch and context.
        let portfolio_count = rng.gen_range(1..=6);
        let mut portfolios = Vec::new();
        let mut commitments: Vec<Digest> = Vec::new();
        for p in 0..portfolio_count {
            let mut seed = [0u8; 32];
            seed[..4].copy_from_slice(&round.to_le_bytes());
            seed[4] = p as u8;
            seed[5] = 0xEE;
            let ids = derive_portfolio(
                &PortfolioSecret::new(seed, b"completeness".to_vec()),
                rng.gen_range(1..=8),
            )
            .unwrap();
            commitments.push(commit_portfolio(&ids).unwrap().root);
            portfolios.push(ids);
        }
        let allow_tree = MerkleTree::build(&commitments).unwrap();
        let mut block = SparseMerkleTree::production();
        let mut revoked = vec![false; portfolio_count];
        for (p, flag) in revoked.iter_mut().enumerate() {
            if rng.gen_bool(0.3) {
                *flag = true;
                block = block.set(&SmtKey::for_commitment(&commitments[p]), true);
            }
        }

        // Pick an honest, unrevoked presenter (skip the round if everyone
        // got revoked).
        let Some(presenter) = (0..portfolio_count).find(|&p| !revoked[p]) else {
            continue;
        };
        let ids = &portfolios[presenter];
        let index = rng.gen_range(0..ids.len());
        let tree = portfolio_tree(ids).unwrap();

        let statement = LegitimacyStatement::new(
            ids[index].value,
            allow_tree.root(),
            block.root(),
            rng.gen_range(1..1_000),
        )
        .bind_context(format!("round-{round}").as_bytes())
        .unwrap();
        let witness = LegitimacyWitness {
            id_value: ids[index].value,
            attr_commitment: ids[index].attr_commitment,
            identity_commitment: commitments[presenter],
            proof_id_in_commitment: tree.prove_inclusion(index).unwrap(),
            proof_commitment_in_allow: allow_tree.prove_inclusion(presenter).unwrap(),
            proof_commitment_not_blocked: block
                .prove(&SmtKey::for_commitment(&commitments[presenter])),
        };

        for backend in &backends {
            let proof = backend
                .prove(&statement, &witness)
                .unwrap_or_else(|e| panic!("round {round}: prove failed: {e}"));
            backend
                .verify(&proof, &statement)
                .unwrap_or_else(|e| panic!("round {round}: verify rejected: {e}"));
        }
    }
}
