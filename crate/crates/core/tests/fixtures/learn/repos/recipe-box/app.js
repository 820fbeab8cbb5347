const recipes = JSON.parse(localStorage.getItem("recipes") || "[]");
document.getElementById("recipes").innerHTML = recipes.map((r) => `<li>${r.name}</li>`).join("");
