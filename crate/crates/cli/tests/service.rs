use std::io::{Read, Write};

use ppipower_cli::service::serve;
use serde_json::Value;

fn request(addr: std::net::SocketAddr, raw: &str) -> (u16, Value) {
    let mut stream = std::net::TcpStream::connect(addr).unwrap();
    stream.write_all(raw.as_bytes()).unwrap();
    let mut text = String::new();
    stream.read_to_string(&mut text).unwrap();
    let status: u16 = text.split_whitespace().nth(1).unwrap().parse().unwrap();
    let body = text.split_once("\r\n\r\n").unwrap().1;
    (status, serde_json::from_str(body).unwrap())
}

fn post(path: &str, content_type: &str, body: &str) -> String {
    format!(
        "POST {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
}

#[test]
fn serves_over_tcp() {
    let runtime = tokio::runtime::Runtime::new().unwrap();
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    runtime.spawn(serve(listener));

    let (status, v) = request(addr, "GET /v1/healthz HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n");
    assert_eq!(status, 200);
    assert_eq!(v["status"], "ok");

    let body = r#"{"sigma2":1,"rho2":0.49,"N":5000,"delta":0.2}"#;
    let (status, v) = request(addr, &post("/v1/plan/mean", "application/json", body));
    assert_eq!(status, 200);
    assert_eq!(v["n_star"], 102);
    assert_eq!(v["curve"].as_array().unwrap().len(), 100);

    let (status, v) = request(addr, &post("/v1/plan/mean", "text/plain", body));
    assert_eq!(status, 415);
    assert_eq!(v["error"]["code"], "unsupported_media_type");

    let (status, v) = request(addr, &post("/v1/plan/mean", "application/json", r#"{"sigma2":1,"rho2":0,"N":10,"delta":0.2,"method":"ppi"}"#));
    assert_eq!(status, 422);
    assert_eq!(v["error"]["min_pool"], 197);

    let (status, _) = request(addr, &post("/nope", "application/json", "{}"));
    assert_eq!(status, 404);
}
