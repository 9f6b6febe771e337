use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use chrono::{TimeZone, Utc};
use tf_lifeline::history::{CommitRecord, FileChange, RepositoryHistory};
use tf_lifeline::identity::{resolve_aliases, IdentitySource, RemoteContext};
use tf_lifeline::lookup::{AccountLookup, HttpAccountLookup, RetryPolicy};

struct Reply {
    status: u16,
    headers: Vec<(&'static str, &'static str)>,
    body: String,
}

fn ok(login: &str) -> Reply {
    Reply {
        status: 200,
        headers: vec![],
        body: format!(r#"{{"sha":"x","author":{{"login":"{login}","id":1}}}}"#),
    }
}

fn status(code: u16) -> Reply {
    Reply {
        status: code,
        headers: vec![],
        body: "{}".into(),
    }
}

#[derive(Default)]
struct Seen {
    paths: Vec<String>,
    auth: Vec<Option<String>>,
}

/// Serves the scripted replies in order, one per connection.
fn serve(replies: Vec<Reply>) -> (String, Arc<Mutex<Seen>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Seen::default()));
    let log = Arc::clone(&seen);
    let mut queue: VecDeque<Reply> = replies.into();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut auth = None;
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line.trim().is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap();
                match k.to_ascii_lowercase().as_str() {
                    "authorization" => auth = Some(v.trim().to_string()),
                    "content-length" => length = v.trim().parse().unwrap(),
                    _ => {}
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            {
                let mut s = log.lock().unwrap();
                s.paths.push(
                    request_line
                        .split_whitespace()
                        .nth(1)
                        .unwrap_or("")
                        .to_string(),
                );
                s.auth.push(auth);
            }
            let reply = queue.pop_front().unwrap_or_else(|| status(500));
            let mut head = format!(
                "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n",
                reply.status,
                reply.body.len()
            );
            for (k, v) in &reply.headers {
                head.push_str(&format!("{k}: {v}\r\n"));
            }
            head.push_str("\r\n");
            stream.write_all(head.as_bytes()).unwrap();
            stream.write_all(reply.body.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

fn fast() -> RetryPolicy {
    RetryPolicy {
        max_attempts: 5,
        base_delay: Duration::from_millis(5),
    }
}

#[test]
fn resolves_caches_and_reuses() {
    let (url, seen) = serve(vec![ok("octocat"), status(404)]);
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache.jsonl");
    let client = HttpAccountLookup::new(&url, Some("secret".into()), Some(&cache)).unwrap();
    assert_eq!(client.lookup("o/r", "c1").as_deref(), Some("octocat"));
    assert_eq!(client.lookup("o/r", "c2"), None);
    // Both answers are cached, so no further requests go out.
    assert_eq!(client.lookup("o/r", "c1").as_deref(), Some("octocat"));
    assert_eq!(client.lookup("o/r", "c2"), None);
    {
        let s = seen.lock().unwrap();
        assert_eq!(
            s.paths,
            vec!["/repos/o/r/commits/c1", "/repos/o/r/commits/c2"]
        );
        assert_eq!(s.auth[0].as_deref(), Some("Bearer secret"));
    }
    drop(client);

    let lines = std::fs::read_to_string(&cache).unwrap();
    assert_eq!(lines.lines().count(), 2);
    // A fresh client answers from the file alone.
    let offline = HttpAccountLookup::new("http://127.0.0.1:9", None, Some(&cache)).unwrap();
    assert_eq!(offline.cached("o/r", "c1"), Some(Some("octocat".into())));
    assert_eq!(offline.lookup("o/r", "c2"), None);
    assert_eq!(offline.cached("o/r", "c2"), Some(None));
}

#[test]
fn retries_rate_limits() {
    let limited = Reply {
        status: 403,
        headers: vec![("x-ratelimit-remaining", "0")],
        body: "{}".into(),
    };
    let (url, seen) = serve(vec![status(429), limited, ok("late")]);
    let client = HttpAccountLookup::new(&url, None, None)
        .unwrap()
        .with_retry(fast());
    assert_eq!(client.lookup("o/r", "c").as_deref(), Some("late"));
    assert_eq!(seen.lock().unwrap().paths.len(), 3);
    assert_eq!(seen.lock().unwrap().auth[0], None);
}

#[test]
fn gives_up_without_caching_failures() {
    let (url, seen) = serve(vec![
        status(500),
        status(429),
        status(429),
        status(429),
        status(429),
        status(429),
    ]);
    let client = HttpAccountLookup::new(&url, None, None)
        .unwrap()
        .with_retry(fast());
    assert_eq!(client.lookup("o/r", "c"), None);
    assert_eq!(client.cached("o/r", "c"), None);
    assert_eq!(client.lookup("o/r", "c"), None);
    assert_eq!(seen.lock().unwrap().paths.len(), 6);
}

#[test]
fn two_emails_one_account_merge() {
    let (url, _) = serve(vec![ok("octocat"), ok("octocat"), status(404)]);
    let client = HttpAccountLookup::new(&url, None, None).unwrap();
    let at = |d: u32| Utc.with_ymd_and_hms(2020, 1, d, 0, 0, 0).unwrap();
    let h = RepositoryHistory::new(
        "r",
        vec![
            CommitRecord::new(
                "c1",
                "Octo",
                "octo@home.net",
                at(1),
                vec![FileChange::add("a")],
            ),
            CommitRecord::new(
                "c2",
                "Octo Cat",
                "octo@work.com",
                at(2),
                vec![FileChange::modify("a")],
            ),
            CommitRecord::new(
                "c3",
                "Solo",
                "solo@x.org",
                at(3),
                vec![FileChange::modify("a")],
            ),
        ],
    )
    .unwrap();
    let r = resolve_aliases(
        &h,
        None,
        Some(RemoteContext {
            client: &client,
            repo_locator: "o/r",
        }),
    )
    .unwrap();
    assert_eq!(r.report.raw_identities, 3);
    assert_eq!(r.report.developers, 2);
    let octo = r
        .developers
        .iter()
        .find(|d| d.dev_id.as_str() == "octocat")
        .unwrap();
    assert_eq!(octo.aliases.len(), 2);
    assert_eq!(octo.source, IdentitySource::RemoteLookup);
    assert_eq!(r.history.commits()[1].dev_id.as_str(), "octocat");
    assert_eq!(r.history.commits()[2].dev_id.as_str(), "solo@x.org");
}
