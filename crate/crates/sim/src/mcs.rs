//! Modulation-and-coding table and link adaptation.

/// One table row. `modulation_order` is the bits per symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McsEntry {
    pub index: u32,
    pub modulation_order: u32,
    pub code_rate: f64,
}

pub const MCS_TABLE: [McsEntry; 6] = [
    McsEntry { index: 5, modulation_order: 4, code_rate: 0.396 },
    McsEntry { index: 10, modulation_order: 4, code_rate: 0.643 },
    McsEntry { index: 11, modulation_order: 6, code_rate: 0.455 },
    McsEntry { index: 19, modulation_order: 6, code_rate: 0.853 },
    McsEntry { index: 20, modulation_order: 8, code_rate: 0.667 },
    McsEntry { index: 27, modulation_order: 8, code_rate: 0.926 },
];

/// Link adaptation only selects schemes whose BLER is strictly below this.
pub const BLER_TARGET: f64 = 0.1;

pub fn lookup(index: u32) -> Option<McsEntry> {
    MCS_TABLE.iter().copied().find(|e| e.index == index)
}

/// Entries using `bits_per_symbol` bits per symbol, lowest index first.
pub fn entries_for_bits(bits_per_symbol: u32) -> impl Iterator<Item = McsEntry> {
    MCS_TABLE.into_iter().filter(move |e| e.modulation_order == bits_per_symbol)
}

/// Highest index whose measured BLER is strictly below the target, or the
/// lowest index present when none qualifies. `None` for an empty history.
pub fn link_adapt(bler_history: &[(u32, f64)]) -> Option<u32> {
    bler_history
        .iter()
        .filter(|(_, bler)| *bler < BLER_TARGET)
        .map(|(index, _)| *index)
        .max()
        .or_else(|| bler_history.iter().map(|(index, _)| *index).min())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_exact() {
        let rows: Vec<(u32, u32, f64)> = MCS_TABLE.iter().map(|e| (e.index, e.modulation_order, e.code_rate)).collect();
        assert_eq!(rows, vec![(5, 4, 0.396), (10, 4, 0.643), (11, 6, 0.455), (19, 6, 0.853), (20, 8, 0.667), (27, 8, 0.926)]);
        assert_eq!(lookup(19).unwrap().code_rate, 0.853);
        assert!(lookup(6).is_none());
        assert_eq!(entries_for_bits(6).map(|e| e.index).collect::<Vec<_>>(), vec![11, 19]);
        assert_eq!(entries_for_bits(2).count(), 0);
    }

    #[test]
    fn all_error_free_picks_the_top() {
        let history: Vec<(u32, f64)> = MCS_TABLE.iter().map(|e| (e.index, 0.0)).collect();
        assert_eq!(link_adapt(&history), Some(27));
    }

    #[test]
    fn only_lowest_qualifies() {
        let history: Vec<(u32, f64)> = MCS_TABLE.iter().map(|e| (e.index, if e.index == 5 { 0.05 } else { 0.5 })).collect();
        assert_eq!(link_adapt(&history), Some(5));
    }

    #[test]
    fn threshold_is_strict() {
        assert_eq!(link_adapt(&[(11, 0.0), (20, 0.1)]), Some(11));
        assert_eq!(link_adapt(&[(11, 0.2), (20, 0.1)]), Some(11));
        assert_eq!(link_adapt(&[]), None);
    }
}
