//! Closed token vocabulary of the policy.
//!
//! Slot-family tokens (`RelSlot*`, `EntSlot*`, ...) pick the i-th entry
//! of a candidate list built from the current context; the list, not
//! the token, carries the actual word. Structural tokens render a fixed
//! marker word and are forced (single legal choice), so they carry zero
//! gradient.

pub type TokenId = u16;

/// Candidate slots per pick family.
pub const NUM_SLOTS: usize = 6;

// structural markers
pub const PLAN_BEGIN: TokenId = 0;
pub const PLAN_END: TokenId = 1;
pub const GOALS: TokenId = 2;
pub const VIA: TokenId = 3;
pub const HOP: TokenId = 4;
// plan template decisions
pub const COUNT_BASE: TokenId = 5; // COUNT_BASE + (k-1), k in 1..=4
pub const STYLE_FIND: TokenId = 9;
pub const STYLE_CONSIDER: TokenId = 10;
pub const REL_SLOT_BASE: TokenId = 11; // shared with executor search-relation picks
pub const NOM_SEARCH: TokenId = 17;
pub const NOM_VISIT: TokenId = 18;
pub const NOM_ANSWER: TokenId = 19;
// executor decisions
pub const ACT_SEARCH: TokenId = 20;
pub const ACT_VISIT: TokenId = 21;
pub const ACT_ANSWER: TokenId = 22;
pub const ENT_SLOT_BASE: TokenId = 23;
pub const PAGE_SLOT_BASE: TokenId = 29;
pub const VAL_SLOT_BASE: TokenId = 35;
pub const HOP_DIGIT_BASE: TokenId = 41; // HOP_DIGIT_BASE + d, d in 0..=3

pub const VOCAB_SIZE: usize = 45;

/// Marker type for the token id space; all layout queries are
/// associated functions.
pub struct Vocabulary;

impl Vocabulary {
    pub const fn size() -> usize {
        VOCAB_SIZE
    }

    pub fn count_token(k: usize) -> TokenId {
        debug_assert!((1..=4).contains(&k));
        COUNT_BASE + (k as TokenId - 1)
    }

    pub fn count_value(token: TokenId) -> Option<usize> {
        (COUNT_BASE..COUNT_BASE + 4)
            .contains(&token)
            .then(|| (token - COUNT_BASE) as usize + 1)
    }

    pub fn rel_slot(s: usize) -> TokenId {
        REL_SLOT_BASE + s as TokenId
    }

    pub fn ent_slot(s: usize) -> TokenId {
        ENT_SLOT_BASE + s as TokenId
    }

    pub fn page_slot(s: usize) -> TokenId {
        PAGE_SLOT_BASE + s as TokenId
    }

    pub fn val_slot(s: usize) -> TokenId {
        VAL_SLOT_BASE + s as TokenId
    }

    pub fn hop_digit(d: usize) -> TokenId {
        HOP_DIGIT_BASE + (d.min(3) as TokenId)
    }

    /// Slot index of a pick token within its family, if it is one.
    pub fn slot_of(token: TokenId, base: TokenId) -> Option<usize> {
        let s = token.checked_sub(base)? as usize;
        (s < NUM_SLOTS).then_some(s)
    }

    /// Fixed rendered word for non-pick tokens.
    pub fn fixed_word(token: TokenId) -> Option<&'static str> {
        match token {
            PLAN_BEGIN => Some(crate::trajectory::PLAN_BEGIN),
            PLAN_END => Some(crate::trajectory::PLAN_END),
            GOALS => Some("goals"),
            VIA => Some("via"),
            HOP => Some("hop"),
            STYLE_FIND => Some("find"),
            STYLE_CONSIDER => Some("consider"),
            NOM_SEARCH | ACT_SEARCH => Some("search"),
            NOM_VISIT | ACT_VISIT => Some("visit"),
            NOM_ANSWER | ACT_ANSWER => Some("answer"),
            t if (COUNT_BASE..COUNT_BASE + 4).contains(&t) => {
                Some(["1", "2", "3", "4"][(t - COUNT_BASE) as usize])
            }
            t if (HOP_DIGIT_BASE..HOP_DIGIT_BASE + 4).contains(&t) => {
                Some(["0", "1", "2", "3"][(t - HOP_DIGIT_BASE) as usize])
            }
            _ => None,
        }
    }
}
