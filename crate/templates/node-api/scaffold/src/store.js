const fs = require("fs");
const path = require("path");

const dir = path.join(__dirname, "..", "data");

function load(name) {
  const file = path.join(dir, `${name}.json`);
  if (!fs.existsSync(file)) return [];
  return JSON.parse(fs.readFileSync(file, "utf8"));
}

function save(name, rows) {
  fs.mkdirSync(dir, { recursive: true });
  fs.writeFileSync(path.join(dir, `${name}.json`), JSON.stringify(rows, null, 2));
}

module.exports = { load, save };
