import datetime
import json
import os
import sqlite3
import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

PORT = int(sys.argv[1])
DB = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data", "app.db")
LOG = os.environ.get("STATEMENT_LOG")

PAGE = """<!doctype html>
<title>Guestbook</title>
<h1>Guestbook</h1>
<ul id="entries"></ul>
<form id="sign">
  <input id="name" placeholder="Your name" required>
  <button type="submit">Sign</button>
</form>
<script>
async function refresh() {
  const rows = await (await fetch("/api/entries")).json();
  document.getElementById("entries").innerHTML = rows.map((r) => `<li>${r.name}</li>`).join("");
}
document.getElementById("sign").addEventListener("submit", async (ev) => {
  ev.preventDefault();
  await fetch("/api/entries", {
    method: "POST",
    headers: {"Content-Type": "application/json"},
    body: JSON.stringify({name: document.getElementById("name").value}),
  });
  refresh();
});
refresh();
</script>
"""


def trace(sql):
    now = datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%d %H:%M:%S.%f")[:-3]
    with open(LOG, "a") as f:
        f.write(f"{now} UTC [{os.getpid()}] LOG:  statement: {sql}\n")


def connect():
    conn = sqlite3.connect(DB)
    if LOG:
        conn.set_trace_callback(trace)
    return conn


class Handler(BaseHTTPRequestHandler):
    def reply(self, status, body, kind="application/json"):
        data = body.encode()
        self.send_response(status)
        self.send_header("Content-Type", kind)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.path == "/api/entries":
            with connect() as conn:
                rows = conn.execute("SELECT id, name FROM entries ORDER BY id").fetchall()
            return self.reply(200, json.dumps([{"id": i, "name": n} for i, n in rows]))
        self.reply(200, PAGE, "text/html")

    def do_POST(self):
        if self.path != "/api/entries":
            return self.reply(404, json.dumps({"error": "not found"}))
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length) or b"{}")
        name = str(body.get("name", "")).strip()
        if not name:
            return self.reply(400, json.dumps({"error": "name is required"}))
        with connect() as conn:
            cur = conn.execute("INSERT INTO entries (name) VALUES (?)", (name,))
        self.reply(200, json.dumps({"id": cur.lastrowid, "name": name}))

    def log_message(self, fmt, *args):
        print(fmt % args, flush=True)


os.makedirs(os.path.dirname(DB), exist_ok=True)
if LOG:
    open(LOG, "a").close()
with sqlite3.connect(DB) as conn:
    conn.execute("CREATE TABLE IF NOT EXISTS entries (id INTEGER PRIMARY KEY, name TEXT NOT NULL)")
server = ThreadingHTTPServer(("127.0.0.1", PORT), Handler)
print(f"Guestbook listening on http://localhost:{PORT}", flush=True)
server.serve_forever()
