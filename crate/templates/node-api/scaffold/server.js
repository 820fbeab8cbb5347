const http = require("http");
const { dispatch } = require("./src/router");
const routes = require("./src/routes");

const port = Number(process.env.PORT || 3001);

const server = http.createServer((req, res) => {
  let raw = "";
  req.on("data", (chunk) => (raw += chunk));
  req.on("end", () => {
    let body = null;
    if (raw) {
      try {
        body = JSON.parse(raw);
      } catch (err) {
        res.writeHead(400, { "Content-Type": "application/json" });
        res.end(JSON.stringify({ error: "invalid JSON body" }));
        return;
      }
    }
    console.log(`${req.method} ${req.url}`);
    dispatch(routes, req, res, body);
  });
});

server.listen(port, () => {
  console.log(`listening on http://localhost:${port}`);
});
