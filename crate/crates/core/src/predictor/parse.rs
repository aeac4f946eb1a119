use crate::labels::StanceLabel;

/// Label keywords recognized in free-text responses. Mirrors
/// `data/stance_keywords.tsv`.
pub const STANCE_KEYWORDS: &[(&str, StanceLabel)] = &[
    ("support", StanceLabel::Support),
    ("against", StanceLabel::Against),
    ("neutral", StanceLabel::Neutral),
    ("สนับสนุน", StanceLabel::Support),
    ("คัดค้าน", StanceLabel::Against),
    ("เป็นกลาง", StanceLabel::Neutral),
];

/// Answer markers. When a response contains one, only the text after the
/// last marker is searched, so reasoning that mentions several labels
/// before the final answer is not misread.
const ANSWER_MARKERS: &[&str] = &["stance:", "จุดยืน:"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no stance keyword in response")]
pub struct ParseFailure;

/// Maps a response to the label of the earliest keyword occurrence,
/// case-insensitively.
pub fn parse_stance_response(raw: &str) -> Result<StanceLabel, ParseFailure> {
    let lower = raw.to_lowercase();
    let tail_start = ANSWER_MARKERS
        .iter()
        .filter_map(|m| lower.rfind(m).map(|at| at + m.len()))
        .max()
        .unwrap_or(0);
    earliest_keyword(&lower[tail_start..])
        .or_else(|| earliest_keyword(&lower))
        .ok_or(ParseFailure)
}

fn earliest_keyword(haystack: &str) -> Option<StanceLabel> {
    STANCE_KEYWORDS
        .iter()
        .filter_map(|(kw, label)| haystack.find(kw).map(|at| (at, *label)))
        .min_by_key(|(at, _)| *at)
        .map(|(_, label)| label)
}
