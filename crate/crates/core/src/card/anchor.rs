use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::CardId;

/// Number of Unicode scalar values in `text`. All anchor offsets use this unit.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Substring by scalar-value offsets, `None` when out of range.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let byte_at = |n: usize| -> Option<usize> {
        if n == 0 {
            return Some(0);
        }
        text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len())).nth(n)
    };
    let s = byte_at(start)?;
    let e = byte_at(end)?;
    Some(&text[s..e])
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnchorError {
    #[error("empty range [{start}, {end})")]
    EmptyRange { start: usize, end: usize },
    #[error("range [{start}, {end}) out of bounds for text of length {len}")]
    OutOfBounds { start: usize, end: usize, len: usize },
}

/// A character range of a card's story plus the text it covered when created.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextAnchor {
    pub card_id: CardId,
    pub start: usize,
    pub end: usize,
    pub snapshot: String,
}

impl TextAnchor {
    pub fn new(card_id: CardId, story: &str, start: usize, end: usize) -> Result<Self, AnchorError> {
        let len = char_len(story);
        if start >= end {
            return Err(AnchorError::EmptyRange { start, end });
        }
        let snapshot = char_slice(story, start, end).ok_or(AnchorError::OutOfBounds { start, end, len })?;
        Ok(Self { card_id, start, end, snapshot: snapshot.to_owned() })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Replacement of `deleted_len` characters at `position` by `inserted_len` new ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextEdit {
    pub position: usize,
    pub deleted_len: usize,
    pub inserted_len: usize,
}

impl TextEdit {
    pub fn insert(position: usize, len: usize) -> Self {
        Self { position, deleted_len: 0, inserted_len: len }
    }

    pub fn delete(position: usize, len: usize) -> Self {
        Self { position, deleted_len: len, inserted_len: 0 }
    }

    pub fn replace(position: usize, deleted_len: usize, inserted_len: usize) -> Self {
        Self { position, deleted_len, inserted_len }
    }

    pub fn is_noop(&self) -> bool {
        self.deleted_len == 0 && self.inserted_len == 0
    }

    /// Smallest single edit turning `old` into `new`, by common prefix and suffix.
    pub fn between(old: &str, new: &str) -> Option<TextEdit> {
        let a: Vec<char> = old.chars().collect();
        let b: Vec<char> = new.chars().collect();
        let prefix = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
        let max_suffix = a.len().min(b.len()) - prefix;
        let suffix = a.iter().rev().zip(b.iter().rev()).take(max_suffix).take_while(|(x, y)| x == y).count();
        let edit = TextEdit {
            position: prefix,
            deleted_len: a.len() - prefix - suffix,
            inserted_len: b.len() - prefix - suffix,
        };
        (!edit.is_noop()).then_some(edit)
    }

    /// Text length after applying this edit to a text of `len` characters.
    pub fn resulting_len(&self, len: usize) -> usize {
        len - self.deleted_len + self.inserted_len
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rebase {
    Kept(TextAnchor),
    Invalidated,
}

impl Rebase {
    pub fn anchor(&self) -> Option<&TextAnchor> {
        match self {
            Rebase::Kept(a) => Some(a),
            Rebase::Invalidated => None,
        }
    }
}

/// Moves an anchor through one edit of a story currently `story_len` characters long.
///
/// Edits ending at or before the anchor start shift it; edits starting at or
/// after its end leave it alone; anything touching the covered characters
/// invalidates it.
pub fn rebase_anchor(anchor: &TextAnchor, edit: TextEdit, story_len: usize) -> Result<Rebase, AnchorError> {
    if anchor.end > story_len {
        return Err(AnchorError::OutOfBounds { start: anchor.start, end: anchor.end, len: story_len });
    }
    let edit_end = edit.position + edit.deleted_len;
    if edit_end > story_len {
        return Err(AnchorError::OutOfBounds { start: edit.position, end: edit_end, len: story_len });
    }

    if edit.is_noop() || edit.position >= anchor.end {
        return Ok(Rebase::Kept(anchor.clone()));
    }
    if edit_end <= anchor.start {
        let mut moved = anchor.clone();
        moved.start = anchor.start - edit.deleted_len + edit.inserted_len;
        moved.end = anchor.end - edit.deleted_len + edit.inserted_len;
        return Ok(Rebase::Kept(moved));
    }
    Ok(Rebase::Invalidated)
}

/// Applies a sequence of edits in order. Stops early once invalidated.
pub fn rebase_through(anchor: &TextAnchor, edits: &[TextEdit], story_len: usize) -> Result<Rebase, AnchorError> {
    let mut current = anchor.clone();
    let mut len = story_len;
    for edit in edits {
        match rebase_anchor(&current, *edit, len)? {
            Rebase::Kept(a) => current = a,
            Rebase::Invalidated => return Ok(Rebase::Invalidated),
        }
        len = edit.resulting_len(len);
    }
    Ok(Rebase::Kept(current))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force oracle: tags every original character, applies the edits to
    /// the real text, then looks for the anchored characters. The anchor
    /// survives only if all its characters remain contiguous, in order, and
    /// still spell the snapshot.
    pub(crate) fn oracle_rebase(
        text: &str,
        anchor: &TextAnchor,
        edits: &[(TextEdit, String)],
    ) -> Option<(usize, usize)> {
        let mut tagged: Vec<(char, Option<usize>)> = text.chars().enumerate().map(|(i, c)| (c, Some(i))).collect();
        for (edit, inserted) in edits {
            assert_eq!(inserted.chars().count(), edit.inserted_len);
            let fresh = inserted.chars().map(|c| (c, None));
            tagged.splice(edit.position..edit.position + edit.deleted_len, fresh);
        }
        let first = tagged.iter().position(|(_, t)| *t == Some(anchor.start))?;
        let span = anchor.end - anchor.start;
        if first + span > tagged.len() {
            return None;
        }
        let contiguous = (0..span).all(|k| tagged[first + k].1 == Some(anchor.start + k));
        if !contiguous {
            return None;
        }
        let found: String = tagged[first..first + span].iter().map(|(c, _)| *c).collect();
        (found == anchor.snapshot).then_some((first, first + span))
    }

    fn anchor(story: &str, s: usize, e: usize) -> TextAnchor {
        TextAnchor::new(CardId::new("c"), story, s, e).unwrap()
    }

    const STORY: &str = "Claire sees a brass clasp on the old wooden box.";

    #[test]
    fn insertion_before_shifts() {
        let a = anchor(STORY, 10, 15);
        let r = rebase_anchor(&a, TextEdit::insert(0, 3), char_len(STORY)).unwrap();
        let moved = r.anchor().unwrap();
        assert_eq!((moved.start, moved.end), (13, 18));
        assert_eq!(moved.snapshot, a.snapshot);
    }

    #[test]
    fn deletion_after_leaves_anchor() {
        let a = anchor(STORY, 10, 15);
        let r = rebase_anchor(&a, TextEdit::delete(20, 5), char_len(STORY)).unwrap();
        assert_eq!(r, Rebase::Kept(a));
    }

    #[test]
    fn overlapping_deletion_invalidates_and_oracle_agrees() {
        let a = anchor(STORY, 10, 15);
        let edit = TextEdit::delete(12, 1);
        assert_eq!(rebase_anchor(&a, edit, char_len(STORY)).unwrap(), Rebase::Invalidated);
        assert_eq!(oracle_rebase(STORY, &a, &[(edit, String::new())]), None);
    }

    #[test]
    fn boundary_insertions() {
        let a = anchor(STORY, 10, 15);
        let len = char_len(STORY);
        // at start: text lands before the anchor
        assert_eq!(rebase_anchor(&a, TextEdit::insert(10, 2), len).unwrap().anchor().unwrap().start, 12);
        // at end: text lands after
        assert_eq!(rebase_anchor(&a, TextEdit::insert(15, 2), len).unwrap(), Rebase::Kept(a.clone()));
        // strictly inside
        assert_eq!(rebase_anchor(&a, TextEdit::insert(11, 2), len).unwrap(), Rebase::Invalidated);
    }

    #[test]
    fn out_of_bounds_edits_are_rejected() {
        let a = anchor(STORY, 10, 15);
        let len = char_len(STORY);
        assert!(matches!(rebase_anchor(&a, TextEdit::delete(len - 1, 2), len), Err(AnchorError::OutOfBounds { .. })));
        assert!(matches!(rebase_anchor(&a, TextEdit::insert(0, 1), 12), Err(AnchorError::OutOfBounds { .. })));
    }

    #[test]
    fn anchor_creation_rules() {
        assert!(matches!(TextAnchor::new("c".into(), "abc", 2, 2), Err(AnchorError::EmptyRange { .. })));
        assert!(matches!(TextAnchor::new("c".into(), "abc", 1, 4), Err(AnchorError::OutOfBounds { .. })));
        let a = TextAnchor::new("c".into(), "héllo wörld", 6, 11).unwrap();
        assert_eq!(a.snapshot, "wörld");
    }

    #[test]
    fn char_slice_counts_scalar_values() {
        assert_eq!(char_slice("añb", 1, 2), Some("ñ"));
        assert_eq!(char_slice("añb", 0, 3), Some("añb"));
        assert_eq!(char_slice("añb", 3, 3), Some(""));
        assert_eq!(char_slice("añb", 2, 4), None);
    }

    #[test]
    fn edit_between_strings() {
        assert_eq!(TextEdit::between("hello world", "hello brave world"), Some(TextEdit::insert(6, 6)));
        assert_eq!(TextEdit::between("aaa", "aa"), Some(TextEdit::delete(2, 1)));
        assert_eq!(TextEdit::between("same", "same"), None);
        assert_eq!(TextEdit::between("abc", "xyz"), Some(TextEdit::replace(0, 3, 3)));
    }

    fn text_and_anchor() -> impl Strategy<Value = (String, usize, usize)> {
        "[a-cé ]{2,40}".prop_flat_map(|text| {
            let len = text.chars().count();
            (Just(text), 0..len).prop_flat_map(move |(t, s)| (Just(t), Just(s), (s + 1)..=len))
        })
    }

    fn edit_for(len: usize) -> impl Strategy<Value = (TextEdit, String)> {
        (0..=len).prop_flat_map(move |pos| {
            (Just(pos), 0..=(len - pos), "[xyz]{0,4}").prop_map(|(pos, del, ins)| {
                let n = ins.chars().count();
                (TextEdit::replace(pos, del, n), ins)
            })
        })
    }

    fn apply(text: &str, edit: &TextEdit, inserted: &str) -> String {
        let chars: Vec<char> = text.chars().collect();
        let mut out: String = chars[..edit.position].iter().collect();
        out.push_str(inserted);
        out.extend(&chars[edit.position + edit.deleted_len..]);
        out
    }

    proptest! {
        #[test]
        fn single_edit_matches_oracle(((text, s, e), edit) in text_and_anchor().prop_flat_map(|(t, s, e)| {
            let len = t.chars().count();
            (Just((t, s, e)), edit_for(len))
        })) {
            let a = anchor(&text, s, e);
            let got = rebase_anchor(&a, edit.0, char_len(&text)).unwrap();
            let want = oracle_rebase(&text, &a, std::slice::from_ref(&edit));
            match (got, want) {
                (Rebase::Kept(moved), Some((ns, ne))) => {
                    prop_assert_eq!((moved.start, moved.end), (ns, ne));
                    let edited = apply(&text, &edit.0, &edit.1);
                    prop_assert_eq!(char_slice(&edited, ns, ne).unwrap(), moved.snapshot.as_str());
                }
                (Rebase::Invalidated, None) => {}
                (got, want) => prop_assert!(false, "rebase {:?} vs oracle {:?}", got, want),
            }
        }

        #[test]
        fn sequential_rebase_equals_script_rebase(
            (text, s, e) in text_and_anchor(),
            seed in proptest::collection::vec((0usize..1000, 0usize..3, "[xyz]{0,3}"), 1..5),
        ) {
            let a = anchor(&text, s, e);
            let mut current = text.clone();
            let mut script = Vec::new();
            for (p, d, ins) in seed {
                let len = char_len(&current);
                let pos = p % (len + 1);
                let del = d.min(len - pos);
                let edit = TextEdit::replace(pos, del, ins.chars().count());
                current = apply(&current, &edit, &ins);
                script.push((edit, ins));
            }
            let edits: Vec<TextEdit> = script.iter().map(|(e, _)| *e).collect();

            let mut stepwise = Rebase::Kept(a.clone());
            let mut len = char_len(&text);
            for edit in &edits {
                if let Rebase::Kept(cur) = &stepwise {
                    stepwise = rebase_anchor(cur, *edit, len).unwrap();
                }
                len = edit.resulting_len(len);
            }
            let scripted = rebase_through(&a, &edits, char_len(&text)).unwrap();
            prop_assert_eq!(&stepwise, &scripted);

            // oracle applied edit by edit on the real intermediate texts
            let mut oracle_text = text.clone();
            let mut oracle_anchor = Some(a.clone());
            for (edit, ins) in &script {
                if let Some(cur) = &oracle_anchor {
                    oracle_anchor = oracle_rebase(&oracle_text, cur, &[(*edit, ins.clone())]).map(|(ns, ne)| TextAnchor {
                        start: ns,
                        end: ne,
                        ..cur.clone()
                    });
                }
                oracle_text = apply(&oracle_text, edit, ins);
            }
            prop_assert_eq!(scripted.anchor().cloned(), oracle_anchor);
        }
    }
}
