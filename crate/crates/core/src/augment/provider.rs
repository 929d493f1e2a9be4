//! Paraphrase providers.
//!
//! [`MockProvider`] is an offline, deterministic stand-in that swaps tokens
//! for synonyms from a shipped slang lexicon and perturbs word order.
//! [`RemoteProvider`] talks to a text-generation service over HTTP:
//!
//! ```text
//! POST $PARAPHRASE_ENDPOINT
//! Authorization: Bearer $PARAPHRASE_KEY
//! Content-Type: application/json
//!
//! {"prompt": "<paraphrase prompt>", "target_class": 3, "seed": 1234}
//!
//! 200 OK
//! {"paraphrase": "<rewritten message>"}
//! ```
//!
//! Only the first line of the returned paraphrase is kept.

use std::collections::HashMap;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::prompt::build_paraphrase_prompt;
use crate::corpus::ClassId;
use crate::error::{Error, Result};
use crate::features::gram_hash;

pub const ENDPOINT_VAR: &str = "PARAPHRASE_ENDPOINT";
pub const KEY_VAR: &str = "PARAPHRASE_KEY";

const DEFAULT_LEXICON: &str = include_str!("../../data/slang_lexicon.txt");

pub trait ParaphraseProvider: Sync {
    fn paraphrase(&self, message: &str, target_class: ClassId, seed: u64) -> Result<String>;
}

/// Groups of interchangeable tokens.
#[derive(Debug, Clone)]
pub struct SlangLexicon {
    groups: Vec<Vec<String>>,
    index: HashMap<String, usize>,
}

impl SlangLexicon {
    /// Parse one comma-separated group per line; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        let mut groups: Vec<Vec<String>> = Vec::new();
        let mut index = HashMap::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let group: Vec<String> = line
                .split(',')
                .map(|w| w.trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect();
            if group.len() < 2 {
                continue;
            }
            for w in &group {
                index.entry(w.clone()).or_insert(groups.len());
            }
            groups.push(group);
        }
        SlangLexicon { groups, index }
    }

    pub fn synonyms(&self, word: &str) -> Option<&[String]> {
        self.index.get(word).map(|&g| self.groups[g].as_slice())
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

impl Default for SlangLexicon {
    fn default() -> Self {
        SlangLexicon::parse(DEFAULT_LEXICON)
    }
}

/// Deterministic offline paraphraser.
///
/// A small fraction of outputs (`artifact_rate`) imitate typical generation
/// failures: a leaked `"Rewritten:"` prefix, an echo of the source, or a
/// truncated fragment. These exercise the downstream filters.
#[derive(Debug, Clone)]
pub struct MockProvider {
    pub lexicon: SlangLexicon,
    pub substitution_rate: f64,
    pub artifact_rate: f64,
    /// Source messages containing this substring fail, to exercise failure
    /// accounting.
    pub fail_on: Option<String>,
}

impl Default for MockProvider {
    fn default() -> Self {
        MockProvider {
            lexicon: SlangLexicon::default(),
            substitution_rate: 0.7,
            artifact_rate: 0.05,
            fail_on: None,
        }
    }
}

impl ParaphraseProvider for MockProvider {
    fn paraphrase(&self, message: &str, _target_class: ClassId, seed: u64) -> Result<String> {
        if let Some(trigger) = &self.fail_on {
            if message.contains(trigger.as_str()) {
                return Err(Error::Provider(format!("mock failure on {message:?}")));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ gram_hash(b'm', message));
        let mut words: Vec<String> = message
            .split_whitespace()
            .map(|w| {
                let lower = w.to_lowercase();
                match self.lexicon.synonyms(&lower) {
                    Some(group) if rng.gen_bool(self.substitution_rate) => {
                        let others: Vec<&String> = group.iter().filter(|s| **s != lower).collect();
                        others[rng.gen_range(0..others.len())].clone()
                    }
                    _ => lower,
                }
            })
            .collect();
        if words.len() >= 2 && rng.gen_bool(0.5) {
            let i = rng.gen_range(0..words.len() - 1);
            words.swap(i, i + 1);
        }
        let rewritten = words.join(" ");
        if rng.gen_bool(self.artifact_rate) {
            return Ok(match rng.gen_range(0..3) {
                0 => format!("Rewritten: {rewritten}"),
                1 => message.to_owned(),
                _ => words.iter().take(2).cloned().collect::<Vec<_>>().join(" "),
            });
        }
        Ok(rewritten)
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    prompt: &'a str,
    target_class: u8,
    seed: u64,
}

#[derive(Deserialize)]
struct RemoteResponse {
    paraphrase: String,
}

/// HTTP client for a hosted text-generation service.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    endpoint: String,
    key: String,
    max_retries: usize,
    agent: ureq::Agent,
}

impl RemoteProvider {
    pub fn new(endpoint: impl Into<String>, key: impl Into<String>, timeout: Duration, max_retries: usize) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        RemoteProvider {
            endpoint: endpoint.into(),
            key: key.into(),
            max_retries,
            agent,
        }
    }

    /// Read `PARAPHRASE_ENDPOINT` and `PARAPHRASE_KEY`.
    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var(ENDPOINT_VAR).map_err(|_| Error::Config(format!("{ENDPOINT_VAR} is not set")))?;
        let key = std::env::var(KEY_VAR).map_err(|_| Error::Config(format!("{KEY_VAR} is not set")))?;
        Ok(RemoteProvider::new(endpoint, key, Duration::from_secs(30), 3))
    }

    fn call_once(&self, body: &RemoteRequest<'_>) -> std::result::Result<String, String> {
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.key))
            .send_json(body)
            .map_err(|e| e.to_string())?;
        let parsed: RemoteResponse = response.body_mut().read_json().map_err(|e| e.to_string())?;
        let line = parsed.paraphrase.lines().next().unwrap_or("").trim().to_owned();
        Ok(line)
    }
}

impl ParaphraseProvider for RemoteProvider {
    fn paraphrase(&self, message: &str, target_class: ClassId, seed: u64) -> Result<String> {
        let prompt = build_paraphrase_prompt(message);
        let body = RemoteRequest {
            prompt: &prompt,
            target_class: target_class.value(),
            seed,
        };
        let mut last_error = String::new();
        for attempt in 0..=self.max_retries {
            match self.call_once(&body) {
                Ok(p) => return Ok(p),
                Err(e) => {
                    last_error = e;
                    if attempt < self.max_retries {
                        std::thread::sleep(Duration::from_millis(50 << attempt));
                    }
                }
            }
        }
        Err(Error::Provider(format!(
            "{} attempts failed, last error: {last_error}",
            self.max_retries + 1
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    #[test]
    fn lexicon_parses_groups() {
        let lex = SlangLexicon::default();
        assert!(lex.len() > 20);
        assert!(lex.synonyms("noob").unwrap().contains(&"scrub".to_string()));
        assert!(lex.synonyms("zzz").is_none());
    }

    #[test]
    fn mock_is_pure_and_length_preserving() {
        let m = MockProvider {
            artifact_rate: 0.0,
            ..MockProvider::default()
        };
        let msg = "you are a useless noob team";
        let a = m.paraphrase(msg, ClassId::INSULTS, 7).unwrap();
        assert_eq!(a, m.paraphrase(msg, ClassId::INSULTS, 7).unwrap());
        assert_eq!(a.split_whitespace().count(), msg.split_whitespace().count());
        let variants: std::collections::BTreeSet<String> =
            (0..20).map(|s| m.paraphrase(msg, ClassId::INSULTS, s).unwrap()).collect();
        assert!(variants.len() > 5);
    }

    #[test]
    fn mock_failure_trigger() {
        let m = MockProvider {
            fail_on: Some("boom".into()),
            ..MockProvider::default()
        };
        assert!(m.paraphrase("boom goes the tank", ClassId::THREATS, 1).is_err());
        assert!(m.paraphrase("fine tank", ClassId::THREATS, 1).is_ok());
    }

    /// Minimal HTTP server answering each request from `replies` in turn.
    fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let seen2 = Arc::clone(&seen);
        std::thread::spawn(move || {
            for (status, body) in replies {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                let mut headers = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    headers.push_str(&line);
                }
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).unwrap();
                seen2.lock().unwrap().push(format!("{headers}\n{}", String::from_utf8(buf).unwrap()));
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}/paraphrase"), seen)
    }

    #[test]
    fn remote_provider_round_trip() {
        let (url, seen) = serve(vec![(200, r#"{"paraphrase":"ur squad is trash\nextra line"}"#.into())]);
        let p = RemoteProvider::new(url, "secret", Duration::from_secs(5), 0);
        let out = p.paraphrase("your team is garbage", ClassId::OTHER_OFFENSIVE, 9).unwrap();
        assert_eq!(out, "ur squad is trash");
        let req = seen.lock().unwrap()[0].clone();
        assert!(req.to_ascii_lowercase().contains("authorization: bearer secret"));
        let body: serde_json::Value = serde_json::from_str(req.split_once("\r\n\n").unwrap().1).unwrap();
        assert_eq!(body["target_class"], 2);
        assert_eq!(body["seed"], 9);
        assert!(body["prompt"].as_str().unwrap().contains("Original: your team is garbage"));
    }

    #[test]
    fn remote_provider_retries_then_fails() {
        let (url, seen) = serve(vec![
            (500, "{}".into()),
            (200, r#"{"paraphrase":"gg"}"#.into()),
        ]);
        let p = RemoteProvider::new(url.clone(), "k", Duration::from_secs(5), 1);
        assert_eq!(p.paraphrase("x", ClassId::HATE, 0).unwrap(), "gg");
        assert_eq!(seen.lock().unwrap().len(), 2);

        let (url, _) = serve(vec![(503, "{}".into()), (503, "{}".into())]);
        let p = RemoteProvider::new(url, "k", Duration::from_secs(5), 1);
        assert!(matches!(p.paraphrase("x", ClassId::HATE, 0), Err(Error::Provider(_))));
    }
}
