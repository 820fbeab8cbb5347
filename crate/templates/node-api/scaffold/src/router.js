function match(pattern, path) {
  const a = pattern.split("/").filter(Boolean);
  const b = path.split("/").filter(Boolean);
  if (a.length !== b.length) return null;
  const params = {};
  for (let i = 0; i < a.length; i++) {
    if (a[i].startsWith("{") && a[i].endsWith("}")) {
      params[a[i].slice(1, -1)] = decodeURIComponent(b[i]);
    } else if (a[i] !== b[i]) {
      return null;
    }
  }
  return params;
}

function send(res, status, payload) {
  res.writeHead(status, {
    "Content-Type": "application/json",
    "Access-Control-Allow-Origin": "*",
  });
  res.end(JSON.stringify(payload));
}

function dispatch(routes, req, res, body) {
  const path = req.url.split("?")[0];
  for (const route of routes) {
    if (route.method !== req.method) continue;
    const params = match(route.path, path);
    if (params) {
      try {
        const [status, payload] = route.handler({ params, body, query: new URL(req.url, "http://x").searchParams });
        send(res, status, payload);
      } catch (err) {
        console.error(`Error: ${err.message}`);
        send(res, 500, { error: "internal error" });
      }
      return;
    }
  }
  send(res, 404, { error: "not found" });
}

module.exports = { dispatch, match, send };
