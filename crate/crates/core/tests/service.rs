use std::fs;
use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use gesture_core::dataset::{build_label_map, parse_yolo};
use gesture_core::imaging::ImageU8;
use gesture_core::service::{router, ServiceConfig};

fn png(path: &Path, w: usize, h: usize) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    ImageU8::filled(w, h, &[10, 20, 30]).unwrap().save_png(path).unwrap();
}

fn app(root: &Path, names: &[&str]) -> Router {
    router(ServiceConfig {
        dataset_root: root.to_path_buf(),
        labels: build_label_map(names).unwrap(),
        static_dir: None,
    })
    .unwrap()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[tokio::test]
async fn lists_images_with_annotation_state() {
    let dir = tempfile::tempdir().unwrap();
    png(&dir.path().join("c.png"), 4, 3);
    png(&dir.path().join("a.png"), 8, 6);
    png(&dir.path().join("b.png"), 2, 2);
    fs::write(dir.path().join("a.txt"), "0 0.500000 0.500000 0.200000 0.200000\n").unwrap();
    fs::write(dir.path().join("b.txt"), "zero 0.5 0.5\n").unwrap();
    let app = app(dir.path(), &["fist", "palm"]);

    let before = snapshot(dir.path());
    let (status, list) = call_json(&app, "GET", "/api/images", None).await;
    assert_eq!(status, StatusCode::OK);
    let list = list.as_array().unwrap();
    let ids: Vec<&str> = list.iter().map(|e| e["image_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["a", "b", "c"]);
    assert_eq!(list[0]["annotated"], true);
    assert_eq!((list[0]["width"].as_u64(), list[0]["height"].as_u64()), (Some(8), Some(6)));
    assert_eq!(list[1]["annotated"], false);
    assert!(list[1]["warning"].is_string());
    assert_eq!(list[2]["annotated"], false);
    assert!(list[2].get("warning").is_none());
    assert_eq!(snapshot(dir.path()), before, "reads must not touch the dataset");
}

#[tokio::test]
async fn empty_root_lists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let (status, list) = call_json(&app(dir.path(), &["x"]), "GET", "/api/images", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(list, json!([]));
    assert!(router(ServiceConfig {
        dataset_root: dir.path().join("missing"),
        labels: build_label_map(&["x"]).unwrap(),
        static_dir: None,
    })
    .is_err());
}

#[tokio::test]
async fn image_bytes_and_nested_ids() {
    let dir = tempfile::tempdir().unwrap();
    png(&dir.path().join("three/img01.png"), 5, 5);
    let app = app(dir.path(), &["three"]);
    let (status, list) = call_json(&app, "GET", "/api/images", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(list[0]["image_id"], "three/img01");

    let resp = app
        .clone()
        .oneshot(Request::get("/api/images/three/img01").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/png");
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[..], &fs::read(dir.path().join("three/img01.png")).unwrap()[..]);

    for bad in ["/api/images/nope", "/api/images/three/../three/img01", "/api/annotations/missing"] {
        assert_eq!(call(&app, "GET", bad, None).await.0, StatusCode::NOT_FOUND, "{bad}");
    }
}

#[tokio::test]
async fn annotation_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    png(&dir.path().join("img.png"), 100, 100);
    fs::write(dir.path().join("labeled.txt"), "1 0.250000 0.250000 0.100000 0.200000\n").unwrap();
    png(&dir.path().join("labeled.png"), 10, 20);
    let app = app(dir.path(), &["fist", "palm", "three"]);

    let (status, rec) = call_json(&app, "GET", "/api/annotations/img", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rec["boxes"], json!([]));
    assert_eq!((rec["image_w"].as_u64(), rec["image_h"].as_u64()), (Some(100), Some(100)));

    let (_, rec) = call_json(&app, "GET", "/api/annotations/labeled", None).await;
    assert_eq!(rec["boxes"], json!([{"class_id": 1, "cx": 0.25, "cy": 0.25, "w": 0.1, "h": 0.2}]));

    let body = json!({"boxes": [{"class_id": 2, "cx": 0.5, "cy": 0.5, "w": 0.5, "h": 0.5}]});
    let (status, _) = call(&app, "PUT", "/api/annotations/img", Some(body)).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let text = fs::read_to_string(dir.path().join("img.txt")).unwrap();
    assert_eq!(text, "2 0.500000 0.500000 0.500000 0.500000\n");

    let precise = json!({"boxes": [{"class_id": 0, "cx": 0.1234567, "cy": 0.3, "w": 0.2000004, "h": 0.1}]});
    assert_eq!(call(&app, "PUT", "/api/annotations/img", Some(precise)).await.0, StatusCode::NO_CONTENT);
    let (_, rec) = call_json(&app, "GET", "/api/annotations/img", None).await;
    assert_eq!(rec["boxes"], json!([{"class_id": 0, "cx": 0.123457, "cy": 0.3, "w": 0.2, "h": 0.1}]));

    let (status, _) = call(&app, "PUT", "/api/annotations/img", Some(json!({"boxes": []}))).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    assert_eq!(fs::read_to_string(dir.path().join("img.txt")).unwrap(), "");
}

#[tokio::test]
async fn invalid_records_are_rejected_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    png(&dir.path().join("img.png"), 50, 50);
    let app = app(dir.path(), &["fist", "palm"]);
    let cases = [
        (json!({"boxes": [{"class_id": 0, "cx": 1.5, "cy": 0.5, "w": 0.1, "h": 0.1}]}), "boxes[0].cx"),
        (json!({"boxes": [{"class_id": 0, "cx": 0.5, "cy": 0.5, "w": 1.2, "h": 0.1}]}), "boxes[0].w"),
        (json!({"boxes": [{"class_id": 0, "cx": 0.5, "cy": 0.5, "w": 0.1, "h": 0.1}, {"class_id": 2, "cx": 0.5, "cy": 0.5, "w": 0.1, "h": 0.1}]}), "boxes[1].class_id"),
    ];
    for (body, field) in cases {
        let (status, err) = call_json(&app, "PUT", "/api/annotations/img", Some(body)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert_eq!(err["field"], field);
        assert!(err["error"].as_str().unwrap().len() > 3);
    }
    let (status, _) = call(&app, "PUT", "/api/annotations/img", Some(json!({"nope": 1}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(!dir.path().join("img.txt").exists());

    let valid = json!({"boxes": [{"class_id": 0, "cx": 0.5, "cy": 0.5, "w": 0.1, "h": 0.1}]});
    assert_eq!(call(&app, "PUT", "/api/annotations/ghost", Some(valid)).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_puts_leave_a_parseable_file() {
    let dir = tempfile::tempdir().unwrap();
    png(&dir.path().join("img.png"), 50, 50);
    let app = app(dir.path(), &["a", "b", "c"]);
    let sidecar = dir.path().join("img.txt");
    let watcher = {
        let sidecar = sidecar.clone();
        tokio::task::spawn_blocking(move || {
            for _ in 0..2000 {
                if let Ok(text) = fs::read_to_string(&sidecar) {
                    let anns = parse_yolo(&text).expect("sidecar observed half-written");
                    assert!(anns.len() == 1 || anns.len() == 3, "{text:?}");
                }
            }
        })
    };
    let mut tasks = Vec::new();
    for i in 0..40 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            let n = if i % 2 == 0 { 1 } else { 3 };
            let boxes: Vec<Value> = (0..n)
                .map(|k| json!({"class_id": k, "cx": 0.5, "cy": 0.5, "w": 0.01 * (i + 1) as f64, "h": 0.2}))
                .collect();
            call(&app, "PUT", "/api/annotations/img", Some(json!({ "boxes": boxes }))).await.0
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::NO_CONTENT);
    }
    watcher.await.unwrap();
    let anns = parse_yolo(&fs::read_to_string(&sidecar).unwrap()).unwrap();
    assert!(anns.len() == 1 || anns.len() == 3);
    let leftovers: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[tokio::test]
async fn label_map_in_construction_order() {
    let dir = tempfile::tempdir().unwrap();
    let (status, map) = call_json(&app(dir.path(), &["zero", "one", "two", "three", "four"]), "GET", "/api/labelmap", None).await;
    assert_eq!(status, StatusCode::OK);
    let map = map.as_array().unwrap();
    assert_eq!(map.len(), 5);
    for (i, (e, name)) in map.iter().zip(["zero", "one", "two", "three", "four"]).enumerate() {
        assert_eq!(e["id"], i + 1);
        assert_eq!(e["name"], name);
    }
    let (_, single) = call_json(&app(dir.path(), &["only"]), "GET", "/api/labelmap", None).await;
    assert_eq!(single, json!([{"id": 1, "name": "only"}]));
}

#[tokio::test]
async fn root_serves_ui_page() {
    let dir = tempfile::tempdir().unwrap();
    let (status, body) = call(&app(dir.path(), &["x"]), "GET", "/", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().contains("<html>"));

    let ui = tempfile::tempdir().unwrap();
    fs::write(ui.path().join("index.html"), "<html>bundle</html>").unwrap();
    fs::write(ui.path().join("app.js"), "console.log(1)").unwrap();
    let app = router(ServiceConfig {
        dataset_root: dir.path().to_path_buf(),
        labels: build_label_map(&["x"]).unwrap(),
        static_dir: Some(ui.path().to_path_buf()),
    })
    .unwrap();
    assert_eq!(call(&app, "GET", "/", None).await.1, b"<html>bundle</html>");
    assert_eq!(call(&app, "GET", "/app.js", None).await.0, StatusCode::OK);
    assert_eq!(call(&app, "GET", "/../secret", None).await.0, StatusCode::NOT_FOUND);
}
