const http = require("http");
const events = [{ id: 1, title: "Park cleanup", date: "2025-05-01" }];
http.createServer((req, res) => {
  if (req.url === "/api/events") {
    res.setHeader("Content-Type", "application/json");
    return res.end(JSON.stringify(events));
  }
  res.end("<h1>Events</h1>");
}).listen(process.env.PORT || 8080);
