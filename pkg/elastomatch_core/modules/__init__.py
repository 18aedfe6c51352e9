# ElastoMatch modules
