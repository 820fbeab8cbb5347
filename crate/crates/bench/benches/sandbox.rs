use criterion::{black_box, criterion_group, criterion_main, Criterion};
use serde_json::json;
use webforge_core::sandbox::{resolve_path, Workspace};
use webforge_core::tools::{ToolConfig, ToolRuntime};

fn resolve(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("src/components")).unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    c.bench_function("resolve_path/inside", |b| {
        b.iter(|| resolve_path(&ws, black_box("src/components/../components/App.tsx")))
    });
    c.bench_function("resolve_path/escape", |b| b.iter(|| resolve_path(&ws, black_box("src/../../etc/passwd"))));
}

fn search(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..50 {
        let body: String =
            (0..200).map(|l| if l % 37 == 0 { format!("// TODO {l}\n") } else { format!("line {l}\n") }).collect();
        std::fs::write(dir.path().join(format!("f{i}.ts")), body).unwrap();
    }
    let rt = ToolRuntime::new(Workspace::open(dir.path()).unwrap(), ToolConfig::default());
    let args = json!({"pattern": "TODO \\d+"});
    c.bench_function("search_file_content/50 files", |b| b.iter(|| rt.execute_named("search_file_content", &args)));
}

criterion_group!(benches, resolve, search);
criterion_main!(benches);
