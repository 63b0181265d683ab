use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::http::{merge_object, JsonClient};
use super::{ProviderConfig, ProviderError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }
}

pub trait ChatModel: Send + Sync {
    fn model_id(&self) -> &str;

    fn generate(&self, messages: &[Message]) -> Result<String, ProviderError>;
}

fn last_content(messages: &[Message]) -> Result<&str, ProviderError> {
    messages.last().map(|m| m.content.as_str()).ok_or(ProviderError::EmptyMessages)
}

/// Returns queued replies in order; errors once the queue is empty.
pub struct ScriptedChat {
    queue: Mutex<VecDeque<String>>,
}

impl ScriptedChat {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { queue: Mutex::new(replies.into_iter().map(Into::into).collect()) }
    }
}

impl ChatModel for ScriptedChat {
    fn model_id(&self) -> &str {
        "scripted"
    }

    fn generate(&self, messages: &[Message]) -> Result<String, ProviderError> {
        last_content(messages)?;
        self.queue
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .pop_front()
            .ok_or(ProviderError::ScriptExhausted)
    }
}

/// Returns the final message content verbatim.
pub struct EchoChat;

impl ChatModel for EchoChat {
    fn model_id(&self) -> &str {
        "echo"
    }

    fn generate(&self, messages: &[Message]) -> Result<String, ProviderError> {
        last_content(messages).map(str::to_string)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatRule {
    /// Every string must occur in the final message.
    pub contains: Vec<String>,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleFile {
    #[serde(default = "default_rules_model")]
    pub model_id: String,
    pub rules: Vec<ChatRule>,
    #[serde(default)]
    pub default_reply: Option<String>,
}

fn default_rules_model() -> String {
    "rules".into()
}

/// Replies with the first rule whose substrings all occur in the final
/// message. Stateless, so results do not depend on call order.
pub struct RuleChat {
    file: RuleFile,
}

impl RuleChat {
    pub fn new(file: RuleFile) -> Self {
        Self { file }
    }

    pub fn open(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path).map_err(|e| ProviderError::file(path, e))?;
        let file: RuleFile =
            serde_json::from_str(&text).map_err(|e| ProviderError::file(path, e))?;
        Ok(Self::new(file))
    }
}

impl ChatModel for RuleChat {
    fn model_id(&self) -> &str {
        &self.file.model_id
    }

    fn generate(&self, messages: &[Message]) -> Result<String, ProviderError> {
        let prompt = last_content(messages)?;
        self.file
            .rules
            .iter()
            .find(|r| r.contains.iter().all(|s| prompt.contains(s.as_str())))
            .map(|r| r.reply.clone())
            .or_else(|| self.file.default_reply.clone())
            .ok_or_else(|| ProviderError::NoRule(prompt.chars().take(120).collect()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpChatConfig {
    #[serde(flatten)]
    pub connection: ProviderConfig,
    /// JSON pointer to the reply text.
    #[serde(default = "default_reply_pointer")]
    pub reply_pointer: String,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub extra_body: Option<Value>,
}

fn default_reply_pointer() -> String {
    "/choices/0/message/content".into()
}

impl HttpChatConfig {
    pub fn new(connection: ProviderConfig) -> Self {
        Self { connection, reply_pointer: default_reply_pointer(), temperature: Some(0.0), extra_body: None }
    }
}

/// Chat-completions client (`{"model", "messages"}` request shape).
pub struct HttpChat {
    config: HttpChatConfig,
    client: JsonClient,
}

impl HttpChat {
    pub fn new(config: HttpChatConfig) -> Self {
        let client = JsonClient::new(format!("chat:{}", config.connection.model_id), config.connection.clone());
        Self { config, client }
    }
}

impl ChatModel for HttpChat {
    fn model_id(&self) -> &str {
        &self.config.connection.model_id
    }

    fn generate(&self, messages: &[Message]) -> Result<String, ProviderError> {
        last_content(messages)?;
        let mut body = json!({ "model": self.config.connection.model_id, "messages": messages });
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(extra) = &self.config.extra_body {
            merge_object(&mut body, extra);
        }
        let resp = self.client.post(&body)?;
        resp.pointer(&self.config.reply_pointer)
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| self.client.malformed(format!("no string at {}", self.config.reply_pointer)))
    }
}

#[cfg(test)]
mod tests {
    use super::super::http::test_server::{serve, Canned};
    use super::*;

    #[test]
    fn scripted_queue() {
        let m = ScriptedChat::new(["A", "B"]);
        let msg = [Message::user("q")];
        assert_eq!(m.generate(&msg).unwrap(), "A");
        assert_eq!(m.generate(&msg).unwrap(), "B");
        assert!(matches!(m.generate(&msg), Err(ProviderError::ScriptExhausted)));
        assert!(matches!(ScriptedChat::new(Vec::<String>::new()).generate(&msg), Err(ProviderError::ScriptExhausted)));
    }

    #[test]
    fn echo_returns_last_message() {
        let msgs = [Message::system("sys"), Message::user("  exact\ntext ")];
        assert_eq!(EchoChat.generate(&msgs).unwrap(), "  exact\ntext ");
        assert!(matches!(EchoChat.generate(&[]), Err(ProviderError::EmptyMessages)));
    }

    #[test]
    fn rules_first_match_wins() {
        let m = RuleChat::new(RuleFile {
            model_id: "r".into(),
            rules: vec![
                ChatRule { contains: vec!["alpha".into(), "beta".into()], reply: "both".into() },
                ChatRule { contains: vec!["alpha".into()], reply: "one".into() },
            ],
            default_reply: None,
        });
        assert_eq!(m.generate(&[Message::user("beta alpha")]).unwrap(), "both");
        assert_eq!(m.generate(&[Message::user("alpha")]).unwrap(), "one");
        assert!(matches!(m.generate(&[Message::user("gamma")]), Err(ProviderError::NoRule(_))));
    }

    #[test]
    fn http_chat_reads_reply() {
        let server = serve(vec![Canned {
            status: 200,
            body: r#"{"choices":[{"message":{"role":"assistant","content":"hi there"}}]}"#.into(),
        }]);
        let chat = HttpChat::new(HttpChatConfig::new(ProviderConfig::new(server.url.clone(), "gpt")));
        assert_eq!(chat.generate(&[Message::user("hello")]).unwrap(), "hi there");
        let (_, sent) = server.requests.lock().unwrap()[0].clone();
        assert_eq!(sent["messages"], serde_json::json!([{"role": "user", "content": "hello"}]));
        assert_eq!(sent["model"], "gpt");
    }

    #[test]
    fn http_chat_malformed_payload() {
        let server = serve(vec![Canned { status: 200, body: r#"{"choices":[]}"#.into() }]);
        let chat = HttpChat::new(HttpChatConfig::new(ProviderConfig::new(server.url.clone(), "gpt")));
        assert!(matches!(chat.generate(&[Message::user("x")]), Err(ProviderError::Malformed { .. })));
    }
}
