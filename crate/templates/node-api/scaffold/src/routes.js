module.exports = [
  { method: "GET", path: "/api/health", handler: () => [200, { status: "ok" }] },
];
