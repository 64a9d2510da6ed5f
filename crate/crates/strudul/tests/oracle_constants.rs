//! Cross-checks the frozen Merkle constants against the node-hash definition
//! h(a, b) = 31*a + b. Pure arithmetic; independent of the language
//! implementation.

#[path = "common/oracle.rs"]
mod oracle;

use oracle::*;

fn h(a: i64, b: i64) -> i64 {
    31 * a + b
}

fn root2(l: &[i64; 4]) -> i64 {
    h(h(l[0], l[1]), h(l[2], l[3]))
}

fn root3(l: &[i64; 8]) -> i64 {
    h(
        h(h(l[0], l[1]), h(l[2], l[3])),
        h(h(l[4], l[5]), h(l[6], l[7])),
    )
}

#[test]
fn depth2_chain_matches_hand_computation() {
    assert_eq!(root2(&MERKLE2_LEAVES), MERKLE2_ROOT);
    let mut updated = MERKLE2_LEAVES;
    updated[MERKLE2_UPDATE_INDEX] = MERKLE2_UPDATE_VALUE;
    assert_eq!(root2(&updated), MERKLE2_ROOT_AFTER);
    // Recompute the root of the updated tree from leaf #2 and its path.
    let [sib0, sib1] = MERKLE2_PATH_FOR_LEAF2;
    assert_eq!(h(sib1, h(MERKLE2_UPDATE_VALUE, sib0)), MERKLE2_ROOT_AFTER);
}

#[test]
fn depth3_chain_matches_hand_computation() {
    assert_eq!(root3(&MERKLE3_LEAVES), MERKLE3_ROOT);
    let mut updated = MERKLE3_LEAVES;
    updated[MERKLE3_UPDATE_INDEX] = MERKLE3_UPDATE_VALUE;
    assert_eq!(root3(&updated), MERKLE3_ROOT_AFTER);
    // Leaf #5 is a right child, its parent a left child, grandparent right.
    let [sib0, sib1, sib2] = MERKLE3_PATH_FOR_LEAF5;
    assert_eq!(
        h(sib2, h(h(sib0, MERKLE3_UPDATE_VALUE), sib1)),
        MERKLE3_ROOT_AFTER
    );
}
