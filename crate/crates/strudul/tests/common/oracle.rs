//! Hand-computed expected values for the Merkle corpus programs, frozen before
//! any tree code was written. The node hash is h(a, b) = 31*a + b over i64.
//!
//! Depth-2 tree over leaves [1, 2, 3, 4]:
//!   n01 = 31*1 + 2  = 33
//!   n23 = 31*3 + 4  = 97
//!   root = 31*33 + 97 = 1120
//! After updating leaf #2 (0-based) from 3 to 5:
//!   n23' = 31*5 + 4 = 159,  root' = 31*33 + 159 = 1182
//! Authentication path for leaf #2: [4 (right sibling), 33 (left sibling)].
//!
//! Depth-3 tree over leaves [1..8]:
//!   n01 = 33, n23 = 97, n45 = 31*5 + 6 = 161, n67 = 31*7 + 8 = 225
//!   m0 = 31*33 + 97 = 1120, m1 = 31*161 + 225 = 5216
//!   root = 31*1120 + 5216 = 39936
//! After updating leaf #5 (0-based) from 6 to 9:
//!   n45' = 31*5 + 9 = 164, m1' = 31*164 + 225 = 5309
//!   root' = 31*1120 + 5309 = 40029
//! Authentication path for leaf #5: [5 (left sibling), 225 (right sibling),
//! 1120 (left sibling)].

#![allow(dead_code)]

pub const MERKLE2_LEAVES: [i64; 4] = [1, 2, 3, 4];
pub const MERKLE2_ROOT: i64 = 1120;
pub const MERKLE2_UPDATE_INDEX: usize = 2;
pub const MERKLE2_UPDATE_VALUE: i64 = 5;
pub const MERKLE2_ROOT_AFTER: i64 = 1182;
pub const MERKLE2_PATH_FOR_LEAF2: [i64; 2] = [4, 33];

pub const MERKLE3_LEAVES: [i64; 8] = [1, 2, 3, 4, 5, 6, 7, 8];
pub const MERKLE3_ROOT: i64 = 39936;
pub const MERKLE3_UPDATE_INDEX: usize = 5;
pub const MERKLE3_UPDATE_VALUE: i64 = 9;
pub const MERKLE3_ROOT_AFTER: i64 = 40029;
pub const MERKLE3_PATH_FOR_LEAF5: [i64; 3] = [5, 225, 1120];
