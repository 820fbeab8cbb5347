document.getElementById("app").textContent = "Ready.";
