//! Talk to OpenAI-compatible services. A tiny in-process server stands in
//! for the real endpoints so the example runs offline; point
//! `endpoint-url` at a real service to use one.
//!
//! cargo run --example remote_backends

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::thread;

use mmkg::corpus::ImageRecord;
use mmkg::gateway::{connect, BackendKind, BackendSpec, ConnectOptions};
use serde_json::{json, Value};

/// Answer `requests` calls, one per connection, then stop.
fn mock_server(requests: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    thread::spawn(move || {
        for _ in 0..requests {
            let (stream, _) = listener.accept().expect("accept");
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((name, value)) = line.split_once(':') {
                    if name.eq_ignore_ascii_case("content-length") {
                        length = value.trim().parse().unwrap();
                    }
                }
            }
            let mut raw = vec![0; length];
            reader.read_exact(&mut raw).unwrap();
            let body: Value = serde_json::from_slice(&raw).unwrap_or(Value::Null);

            let reply = if request_line.contains("/embeddings") {
                json!({"data": [{"embedding": [0.6, 0.8, 0.0]}]})
            } else {
                let has_image = body.to_string().contains("data:image/png;base64,");
                let text = if has_image {
                    "A flooded street with a half-submerged bridge."
                } else {
                    r#"("entity"<|>BRIDGE<|>STRUCTURE<|>Half submerged)##<|COMPLETE|>"#
                };
                json!({"choices": [{"message": {"content": text}}]})
            };
            let payload = reply.to_string();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            )
            .unwrap();
        }
    });
    url
}

fn main() -> mmkg::Result<()> {
    let url = mock_server(4);
    let options = ConnectOptions { deterministic: true };
    let expert = connect(&BackendSpec::remote(BackendKind::Expert, &url, "vision-model"), options)?;
    let embedder = connect(
        &BackendSpec::remote(BackendKind::Embedder, &url, "embedding-model").with_dimension(3),
        options,
    )?;
    let llm = connect(&BackendSpec::remote(BackendKind::Extractor, &url, "text-model"), options)?;

    let mut image = ImageRecord::new("harbor", "images/harbor.png");
    image.base_dir = Some(Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data"));

    println!("{} says: {}", expert.identity(), expert.describe(&image, "Describe the image.", "")?);
    println!("text vector:  {:?}", embedder.embed_text("flooded bridge")?.values());
    println!("image vector: {:?}", embedder.embed_image(&image)?.values());
    println!("{} says: {}", llm.identity(), llm.complete("Extract entities from: the bridge is under water.")?);
    Ok(())
}
