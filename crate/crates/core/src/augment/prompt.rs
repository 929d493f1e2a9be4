//! Fixed prompt templates for classification and paraphrasing.

const CLASSIFY_HEADER: &str = "Classify gaming chat toxicity:\n\
0=Non-toxic: Normal/positive chat\n\
1=Insults: Personal attacks, slurs\n\
2=Other Offensive: Inappropriate but not direct\n\
3=Hate/Harassment: Targeted abuse\n\
4=Threats: Violence/harm threats\n\
5=Extremism: Hate ideology\n\
Message: ";

const PARAPHRASE_HEAD: &str = "Rewrite this World of Tanks game chat message using different words but keeping the same meaning and toxicity level.\n\
Original: ";

const PARAPHRASE_TAIL: &str = "\nRequirements: Keep EXACT same meaning and level of toxicity; use natural gaming language, abbreviations, slang; similar length (3\u{2013}20 words). Output ONLY the rewritten message.";

/// The short classification prompt with class definitions, ending in
/// `Message: <message>`.
pub fn build_classify_prompt(message: &str) -> String {
    let mut out = String::with_capacity(CLASSIFY_HEADER.len() + message.len());
    out.push_str(CLASSIFY_HEADER);
    out.push_str(message);
    out
}

/// The paraphrase request sent to a text-generation provider.
pub fn build_paraphrase_prompt(message: &str) -> String {
    let mut out = String::with_capacity(PARAPHRASE_HEAD.len() + message.len() + PARAPHRASE_TAIL.len());
    out.push_str(PARAPHRASE_HEAD);
    out.push_str(message);
    out.push_str(PARAPHRASE_TAIL);
    out
}
